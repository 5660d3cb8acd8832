"""Link-level simulation of a clustered MIMO OTFS-NOMA downlink."""

from .channel import (
    ChannelEigenSystem, ChannelStats, DdChannelMatrix, NotBlockCirculantError, PathSet,
    UpaGeometry, build_channel_matrix, channel_eigensystem, eigen_decompose, sample_paths,
    steering_element, tf_gain,
)
from .detection import (
    SingularChannelError, SinrComponents, ZfEqualizer, build_zf, detect_and_cancel,
    effective_eigenvalues, equalize_hm, hm_interference_oracle, hm_sinr_closed_form, lm_sinr,
)
from .grid import DdFrame, OtfsGrid, TfFrame, devectorize, isfft, psi_matrix, sfft, vectorize
from .precoding import PowerAllocation, Precoder, allocate_power, conjugate_beam
from .simulation import (
    OutageStats, ScenarioConfig, TrialResult, oma_baseline, outage_probability, place_users,
    run_trial, sweep,
)

__version__ = "0.1.0"
