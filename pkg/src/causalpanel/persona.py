"""Persona pipeline: cluster devices on app-category usage, then track the
persona mix through time against frozen centroids.

The workflow mirrors a two-stage study design: personas are learned once
(k-means on per-device feature vectors) and the centroids frozen; later
data is only ever assigned, never refit, so count changes between windows
reflect behavior change rather than cluster drift. Window-to-window count
differences are z-scored per persona and fed to the change-point
detector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Mapping, Sequence

import numpy as np

from .changepoint import PenaltyConfig, Segmentation, detect_penalized
from .errors import SchemaError, ValidationError

DEFAULT_K = 6
MAX_LLOYD_ITERATIONS = 300

WINDOW_WIDTH = timedelta(days=28)
WINDOW_STRIDE = timedelta(days=14)

# Stand-in 6-category feature space; the label set follows the published
# persona taxonomy, and each category is the usage domain its persona is
# named after.
DEFAULT_PERSONA_NAMES = (
    "Casual Gamers",
    "Web Users",
    "Communication Users",
    "Content Creators",
    "Office/Productivity",
    "File & Network Sharer",
)
DEFAULT_FEATURE_CATEGORIES = (
    "gaming",
    "web_browsing",
    "communication",
    "content_creation",
    "office_productivity",
    "file_network_sharing",
)
CATEGORY_TO_PERSONA = dict(zip(DEFAULT_FEATURE_CATEGORIES, DEFAULT_PERSONA_NAMES))


@dataclass(frozen=True)
class UsageFeatureVector:
    """Per-device usage intensities (hours) over one window or day."""

    device_id: str
    window_start: date
    features: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "features", dict(self.features))
        for name, value in self.features.items():
            if not (np.isfinite(value) and value >= 0.0):
                raise ValidationError(
                    f"device {self.device_id}: feature {name!r} = {value} "
                    "must be finite and non-negative"
                )

    def as_array(self, feature_names: Sequence[str]) -> np.ndarray:
        missing = set(feature_names) ^ set(self.features)
        if missing:
            raise SchemaError(
                f"device {self.device_id}: feature names do not align "
                f"(mismatch on {sorted(missing)})"
            )
        return np.array([self.features[n] for n in feature_names], dtype=float)


@dataclass(frozen=True)
class PersonaModel:
    """k centroids with stable names; ``frozen`` marks a model whose
    centroids are reference anchors rather than a fresh fit."""

    centroids: np.ndarray
    persona_names: tuple[str, ...]
    feature_names: tuple[str, ...]
    frozen: bool = True

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "persona_names", tuple(self.persona_names))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        k, d = c.shape if c.ndim == 2 else (0, 0)
        if c.ndim != 2 or k < 2:
            raise ValidationError("need a 2-d centroid matrix with k >= 2 rows")
        if len(self.persona_names) != k:
            raise ValidationError(f"{k} centroids but {len(self.persona_names)} names")
        if len(set(self.persona_names)) != k:
            raise ValidationError("persona names must be unique")
        if len(self.feature_names) != d:
            raise ValidationError(f"{d} feature columns but {len(self.feature_names)} names")
        for i in range(k):
            for j in range(i + 1, k):
                if np.array_equal(c[i], c[j]):
                    raise ValidationError(f"centroids {i} and {j} are identical")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class PersonaCountSeries:
    """Device counts per persona over sliding windows, with consecutive
    differences and their per-persona z-scores."""

    window_starts: tuple[date, ...]
    counts: np.ndarray
    diffs: np.ndarray
    zscores: np.ndarray
    persona_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        diffs = np.asarray(self.diffs, dtype=np.int64)
        z = np.asarray(self.zscores, dtype=float)
        for arr in (counts, diffs, z):
            arr.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "diffs", diffs)
        object.__setattr__(self, "zscores", z)
        object.__setattr__(self, "window_starts", tuple(self.window_starts))
        object.__setattr__(self, "persona_names", tuple(self.persona_names))
        w = len(self.window_starts)
        k = len(self.persona_names)
        if counts.shape != (w, k):
            raise ValidationError(f"counts shape {counts.shape}, expected {(w, k)}")
        if (counts < 0).any():
            raise ValidationError("negative persona counts")
        if w and (diffs.shape != (w - 1, k) or z.shape != (w - 1, k)):
            raise ValidationError("diffs/zscores must have windows-1 rows")
        if not np.array_equal(diffs, counts[1:] - counts[:-1]):
            raise ValidationError("diffs do not match count differences")


def _distinct_rows(X: np.ndarray) -> int:
    return np.unique(X, axis=0).shape[0]


def _squared_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, computed by explicit expansion
    so ties are exact for identical coordinates."""
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _farthest_point_init(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    """First center drawn by the seeded RNG; the rest greedily maximize the
    distance to the nearest chosen center (ties to the lowest index)."""
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    min_d2 = _squared_distances(X, X[chosen])[:, 0]
    while len(chosen) < k:
        nxt = int(np.argmax(min_d2))
        chosen.append(nxt)
        min_d2 = np.minimum(min_d2, _squared_distances(X, X[[nxt]])[:, 0])
    return X[chosen].copy()


def _derive_names(centroids: np.ndarray, feature_names: Sequence[str]) -> tuple[str, ...]:
    """Name each persona after its dominant feature, suffixing repeats."""
    names: list[str] = []
    for row in centroids:
        base = feature_names[int(np.argmax(row))]
        name = base
        copy = 2
        while name in names:
            name = f"{base}/{copy}"
            copy += 1
        names.append(name)
    return tuple(names)


def fit_kmeans(
    vectors: Sequence[UsageFeatureVector],
    k: int = DEFAULT_K,
    seed: int = 0,
    *,
    persona_names: Sequence[str] | None = None,
    return_history: bool = False,
):
    """Lloyd's k-means with deterministic seeded initialization.

    Empty clusters are reseeded to the point currently farthest from its
    assigned centroid. Iteration stops when assignments repeat or after
    300 rounds. With ``return_history`` the per-iteration SSE path is
    returned alongside the model; it is non-increasing by construction.
    """
    if not vectors:
        raise ValueError("no vectors to cluster")
    feature_names = tuple(sorted(vectors[0].features))
    X = np.vstack([v.as_array(feature_names) for v in vectors])
    if k < 2:
        raise ValueError("k must be at least 2")
    if _distinct_rows(X) < k:
        raise ValueError(
            f"need at least {k} distinct vectors, have {_distinct_rows(X)}"
        )

    C = _farthest_point_init(X, k, seed)
    previous_assign = None
    sse_path: list[float] = []
    for _ in range(MAX_LLOYD_ITERATIONS):
        d2 = _squared_distances(X, C)
        assign = np.argmin(d2, axis=1)
        sse_path.append(float(d2[np.arange(len(X)), assign].sum()))
        if previous_assign is not None and np.array_equal(assign, previous_assign):
            break

        # Reseed each empty cluster to the worst-fit remaining point; the
        # reseeded point moves to cost 0, so SSE stays non-increasing.
        empty = [j for j in range(k) if not (assign == j).any()]
        if empty:
            own_d2 = d2[np.arange(len(X)), assign]
            order = np.argsort(own_d2)[::-1]
            used: set[int] = set()
            for j in empty:
                pick = next(int(i) for i in order if int(i) not in used)
                used.add(pick)
                assign[pick] = j
        # The stopping comparison uses the post-reseed assignment: that is
        # the partition the next centroid update is computed from.
        previous_assign = assign
        for j in range(k):
            members = assign == j
            if members.any():
                C[j] = X[members].mean(axis=0)

    names = (
        tuple(persona_names)
        if persona_names is not None
        else _derive_names(C, feature_names)
    )
    model = PersonaModel(
        centroids=C, persona_names=names, feature_names=feature_names, frozen=True
    )
    if return_history:
        return model, np.asarray(sse_path)
    return model


def rename_personas(model: PersonaModel, mapping: Mapping[str, str]) -> PersonaModel:
    """Relabel personas (e.g. dominant-feature names to published labels)
    without touching centroids or their order."""
    names = tuple(mapping.get(n, n) for n in model.persona_names)
    return PersonaModel(
        centroids=model.centroids,
        persona_names=names,
        feature_names=model.feature_names,
        frozen=model.frozen,
    )


def assign_personas(
    vectors: Sequence[UsageFeatureVector], model: PersonaModel
) -> dict[str, int]:
    """Nearest-centroid assignment against frozen centroids; ties go to
    the lowest persona index."""
    seen: set[str] = set()
    for v in vectors:
        if v.device_id in seen:
            raise ValidationError(f"duplicate device id {v.device_id!r}")
        seen.add(v.device_id)
    if not vectors:
        return {}
    X = np.vstack([v.as_array(model.feature_names) for v in vectors])
    assign = np.argmin(_squared_distances(X, model.centroids), axis=1)
    return {v.device_id: int(a) for v, a in zip(vectors, assign)}


def _as_days(value) -> timedelta:
    if isinstance(value, timedelta):
        return value
    return timedelta(days=int(value))


def windowed_counts(
    records: Iterable[UsageFeatureVector],
    model: PersonaModel,
    width: timedelta | int = WINDOW_WIDTH,
    stride: timedelta | int = WINDOW_STRIDE,
) -> PersonaCountSeries:
    """Count devices per persona over sliding windows.

    ``records`` are daily feature rows (``window_start`` is the record
    day). Per window, each device's rows inside the window are averaged
    to one vector, zero-usage devices are dropped, and the rest are
    assigned to their nearest frozen centroid. Diffs are consecutive
    count differences; z-scores standardize each persona's diff column
    by its population std (zero-std columns give all-zero z-scores).
    """
    width = _as_days(width)
    stride = _as_days(stride)
    if width <= timedelta(0) or stride <= timedelta(0):
        raise ValueError("width and stride must be positive durations")
    records = sorted(
        records, key=lambda r: (r.window_start, r.device_id)
    )
    if not records:
        raise ValueError("no usage records")
    first = records[0].window_start
    last = records[-1].window_start
    if first + width > last + timedelta(days=1):
        raise ValueError(
            f"records span {first}..{last}, less than one {width.days}-day window"
        )

    starts: list[date] = []
    cursor = first
    while cursor + width <= last + timedelta(days=1):
        starts.append(cursor)
        cursor += stride

    k = model.k
    counts = np.zeros((len(starts), k), dtype=np.int64)
    for w, start in enumerate(starts):
        end = start + width
        per_device: dict[str, list[np.ndarray]] = {}
        for r in records:
            if start <= r.window_start < end:
                per_device.setdefault(r.device_id, []).append(
                    r.as_array(model.feature_names)
                )
        for device in sorted(per_device):
            mean_vec = np.mean(per_device[device], axis=0)
            if not mean_vec.any():
                continue
            idx = int(
                np.argmin(_squared_distances(mean_vec[None, :], model.centroids)[0])
            )
            counts[w, idx] += 1

    diffs = counts[1:] - counts[:-1]
    z = np.zeros_like(diffs, dtype=float)
    if diffs.shape[0] > 0:
        means = diffs.mean(axis=0)
        stds = diffs.std(axis=0)
        nonzero = stds > 0
        z[:, nonzero] = (diffs[:, nonzero] - means[nonzero]) / stds[nonzero]
    return PersonaCountSeries(
        window_starts=tuple(starts),
        counts=counts,
        diffs=diffs,
        zscores=z,
        persona_names=model.persona_names,
    )


def persona_changepoint(
    series: PersonaCountSeries,
    penalty: PenaltyConfig = PenaltyConfig(kind="bic"),
) -> dict[str, Segmentation]:
    """Penalized change-point detection on each persona's z-score column."""
    if len(series.window_starts) < 4:
        raise ValueError("need at least 4 windows for change-point analysis")
    return {
        name: detect_penalized(series.zscores[:, j], penalty)
        for j, name in enumerate(series.persona_names)
    }
