"""mindmodal: multimodal (EEG / face / audio) mental-state classification
with an LLM prompting and ablation-evaluation harness.
"""

from .eeg import (
    EegRecording,
    FilterSpec,
    SnapshotSet,
    TimeWindow,
    apply_fir,
    average_reference,
    design_bandpass_fir,
    equidistant_timestamps,
    read_eeg_csv,
    snapshot,
)
from .gateway import (
    GatewayConfig,
    OpenAIGateway,
    OracleGateway,
    ScriptedGateway,
    UniformGateway,
    Verdict,
    parse_label,
)
from .harness import (
    DatasetManifest,
    RunReport,
    SampleLoader,
    SampleRecord,
    TrialConfig,
    ablation_grid,
    emit_report,
    load_manifest,
    majority_vote_baseline,
    run_experiment,
    run_trial,
)
from .prompts import (
    AssembledPrompt,
    ClassLabel,
    ModalityDescriptor,
    ShotExample,
    TaskSpec,
    build_few_shot,
    build_zero_shot,
    class_label_block,
)
from .topomap import interpolate_scalp, montage, project_layout, render, render_snapshot_montage

__version__ = "0.1.0"
