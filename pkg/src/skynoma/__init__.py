"""Link-level simulator and receivers for aerial/terrestrial uplink NOMA."""

from .au_estimation import (
    AuEstimate,
    EstimationFailure,
    delay_scan,
    delay_scan_pair,
    doppler_scan,
    estimate_au_channel,
    estimate_cccm,
)
from .channel import (
    AuChannelState,
    FrameSet,
    LinkGeometry,
    TuChannelState,
    apply_min_delay_lock,
    draw_au_channel,
    draw_tu_channel,
    effective_matrices,
    make_geometry,
    synthesize_frame,
    synthesize_interval,
)
from .config import SimulationConfig, load_config
from .detector import (
    AugmentedModel,
    DetectionReport,
    build_augmented_model,
    detect_batch,
    lin_mmse_detect,
    lin_mmse_sic_detect,
    sdr_per_symbol,
    sls_sic_detect,
    wl_mmse_detect,
    wl_mmse_filter,
)
from .harness import GridRunner, TrialReport, run_grid, run_trial
from .operators import PulseModel, dirichlet, make_pulse
from .tu_estimation import (
    TuEstimate,
    TuPilotModel,
    build_pilot_model,
    bwlu_estimate,
    ls_estimate,
)
from .waveform import PilotSchedule, TxWindow, draw_symbols, modulate_block

__version__ = "0.1.0"
