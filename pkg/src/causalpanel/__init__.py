"""causalpanel: policy-impact estimation on device-usage panels.

Difference-in-differences, synthetic control with randomization
inference, offline change-point detection, and a persona-mix pipeline,
plus a synthetic-scenario generator with ground truth for end-to-end
verification.
"""

__version__ = "0.1.0"

from .changepoint import (
    PenaltyConfig,
    Segmentation,
    detect_known_k,
    detect_penalized,
    effective_penalty,
    robust_noise_scale,
    stability_scan,
)
from .did import DidFit, DidSpec, fit_did, parallel_trends_diagnostic
from .errors import (
    CausalPanelError,
    ConvergenceWarning,
    DiagnosticUnavailableError,
    NumericalError,
    ParseError,
    SchemaError,
    SingularDesignError,
    SpecError,
    ValidationError,
)
from .paneldata import (
    PanelDataset,
    PolicyTimeline,
    TelemetryRecord,
    TreatmentEvent,
    aggregate_telemetry,
    extract_treatment_events,
    merge_panels,
)
from .panelio import (
    parse_persona_csv,
    parse_policy_csv,
    parse_telemetry_csv,
    read_panel,
    write_panel,
    write_persona_csv,
    write_policy_csv,
    write_telemetry_csv,
)
from .persona import (
    PersonaCountSeries,
    PersonaModel,
    UsageFeatureVector,
    assign_personas,
    fit_kmeans,
    persona_changepoint,
    rename_personas,
    windowed_counts,
)
from .simgen import (
    GroundTruthManifest,
    PersonaShiftConfig,
    ScenarioConfig,
    SimulatedData,
    TreatmentConfig,
    UnitConfig,
    build_manifest,
    generate,
    generate_panel,
    scenario_hash,
    write_scenario,
)
from .synthcontrol import (
    SynthFit,
    SynthSpec,
    fit_synth,
    fit_weights,
    project_to_simplex,
    randomization_inference,
)

__all__ = [
    "CausalPanelError",
    "ParseError",
    "ValidationError",
    "SchemaError",
    "SpecError",
    "NumericalError",
    "SingularDesignError",
    "DiagnosticUnavailableError",
    "ConvergenceWarning",
    "PanelDataset",
    "PolicyTimeline",
    "TelemetryRecord",
    "TreatmentEvent",
    "aggregate_telemetry",
    "extract_treatment_events",
    "merge_panels",
    "parse_policy_csv",
    "write_policy_csv",
    "parse_telemetry_csv",
    "write_telemetry_csv",
    "parse_persona_csv",
    "write_persona_csv",
    "read_panel",
    "write_panel",
    "DidSpec",
    "DidFit",
    "fit_did",
    "parallel_trends_diagnostic",
    "SynthSpec",
    "SynthFit",
    "project_to_simplex",
    "fit_weights",
    "fit_synth",
    "randomization_inference",
    "PenaltyConfig",
    "Segmentation",
    "robust_noise_scale",
    "effective_penalty",
    "detect_known_k",
    "detect_penalized",
    "stability_scan",
    "UsageFeatureVector",
    "PersonaModel",
    "PersonaCountSeries",
    "fit_kmeans",
    "rename_personas",
    "assign_personas",
    "windowed_counts",
    "persona_changepoint",
    "UnitConfig",
    "TreatmentConfig",
    "PersonaShiftConfig",
    "ScenarioConfig",
    "GroundTruthManifest",
    "SimulatedData",
    "scenario_hash",
    "build_manifest",
    "generate_panel",
    "generate",
    "write_scenario",
    "__version__",
]
