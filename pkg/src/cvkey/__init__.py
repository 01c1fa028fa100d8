"""Key-rate bounds for Gaussian-modulated coherent-state CV-QKD with postselection."""

__version__ = "0.1.0"

from .channel import (  # noqa: E402
    BinaryChannelInfo,
    ChannelParams,
    ReducedAnnouncement,
    binary_channel_info,
    binary_entropy,
    error_rate,
    marginal_beta_x,
    prior_alpha_x,
    separability_guard,
    squeezing_from_noise,
)
from .eve_info import chi_2way, chi_dr, chi_rr, entropy, holevo_bounds, spectra  # noqa: E402
from .keyrate import (  # noqa: E402
    ConvergenceError,
    ECKind,
    ECModel,
    ProtocolSpec,
    QuadratureSettings,
    RateBreakdown,
    Reconciliation,
    delta_I,
    ec_efficiency,
    key_rate,
)
from .optimizer import FixedKappa, OptimizeKappa, SweepSpec, optimize_kappa, run_sweep  # noqa: E402
