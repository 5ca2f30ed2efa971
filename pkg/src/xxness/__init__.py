"""Steady-state transport of boundary-driven inhomogeneous XX spin chains."""

from .chain import (
    ChainSpec,
    PerturbationSpec,
    apply_perturbation,
    build_homogeneous,
    build_krawtchouk,
    is_mirror_symmetric,
    reflect,
)
from .currents import (
    BathConfig,
    conductivity,
    current_report,
    flow_bounds,
    heat_flow,
    high_gap_limits,
    kappa,
    log_m_coefficient,
    m_coefficient,
    mirror_flows,
    ness_coefficients,
    spin_flow,
)
from .errors import XXNessError
from .spectral import (
    SpectralData,
    closed_form_homogeneous,
    closed_form_krawtchouk,
    diagonalize,
    rescale_to_window,
    transfer_fidelity,
)

__version__ = "0.1.0"
