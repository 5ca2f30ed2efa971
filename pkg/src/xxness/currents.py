"""Steady-state mode data, spin/heat flows, bounds and conductivities.

Flows are the contributions injected by the left bath (site 0). Every
exponential is evaluated through ``exp(-x)`` and ``expm1`` so that products
``beta * E`` up to several hundred stay finite and free of cancellation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .chain import ChainSpec
from .errors import DomainError, GapError, InvalidParameterError, SymmetryError
from .spectral import SpectralData, eigenvalues, matrix_function

MIRROR_TOL = 1e-8
SMALL_GAP_RATIO = 1e-3
HIGH_GAP_RATIO = 100.0


@dataclass(frozen=True)
class BathConfig:
    """Two bosonic baths at inverse temperatures ``beta_left``/``beta_right``.

    ``h_left``/``h_right`` are the (flat) smearing levels and ``lam`` the
    dimensionless chain-bath coupling.
    """

    beta_left: float
    beta_right: float
    h_left: float = 1.0
    h_right: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("beta_left", "beta_right"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and positive, got {value}")
        for name in ("h_left", "h_right", "lam"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidParameterError(f"{name} must be finite, got {value}")
        if self.h_left < 0 or self.h_right < 0:
            raise InvalidParameterError("smearing levels must be >= 0")

    @classmethod
    def from_temperatures(cls, t_left: float, t_right: float, **kwargs) -> "BathConfig":
        if not (t_left > 0 and t_right > 0 and np.isfinite(t_left) and np.isfinite(t_right)):
            raise DomainError(f"temperatures must be finite and positive, got {t_left}, {t_right}")
        return cls(1.0 / t_left, 1.0 / t_right, **kwargs)

    @property
    def t_left(self) -> float:
        return 1.0 / self.beta_left

    @property
    def t_right(self) -> float:
        return 1.0 / self.beta_right

    @property
    def mean_temperature(self) -> float:
        return 0.5 * (self.t_left + self.t_right)

    @property
    def equal_h(self) -> bool:
        return self.h_left == self.h_right

    def swapped(self) -> "BathConfig":
        return BathConfig(self.beta_right, self.beta_left, self.h_right, self.h_left, self.lam)


def bose_occupation(beta, energy):
    """``1 / (exp(beta E) - 1)``; scalar in, scalar out."""
    energy = np.asarray(energy, dtype=float)
    if np.any(energy <= 0):
        raise DomainError(f"Bose occupation needs positive energy, got {energy.min()!r}")
    if np.any(np.asarray(beta) <= 0):
        raise DomainError("Bose occupation needs beta > 0")
    x = np.asarray(beta * energy, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-x) / -np.expm1(-x)
    return out if out.ndim else float(out)


def sinh_ratio(u, v):
    """``sinh(u) / sinh(v)`` for ``v > 0`` without overflow."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    au = np.abs(u)
    return np.sign(u) * np.exp(au - v) * np.expm1(-2.0 * au) / np.expm1(-2.0 * v)


def _bound_kernel(a, b):
    """``sinh((b - a)/2) / sqrt(sinh(a) sinh(b))`` for ``a, b > 0``."""
    gap = np.abs(b - a)
    return (np.sign(b - a) * np.exp(-np.minimum(a, b)) * -np.expm1(-gap)
            / np.sqrt(np.expm1(-2.0 * a) * np.expm1(-2.0 * b)))


@dataclass(frozen=True, eq=False)
class NessCoefficients:
    """Per-mode rates. Row 0 of ``big_c``/``big_c_tilde`` is the left bath."""

    big_c: np.ndarray
    big_c_tilde: np.ndarray
    d: np.ndarray
    d_tilde: np.ndarray
    occupations: np.ndarray

    @property
    def n_modes(self) -> int:
        return int(self.d.size)


def ness_coefficients(sd: SpectralData, bath: BathConfig) -> NessCoefficients:
    E = sd.energies
    h2 = np.array([bath.h_left, bath.h_right])[:, None] ** 2
    n = np.vstack([bose_occupation(bath.beta_left, E), bose_occupation(bath.beta_right, E)])
    big_c = 2 * np.pi * h2 * (n + 1.0)
    big_c_tilde = 2 * np.pi * h2 * n
    ends = np.vstack([sd.phi_first, sd.phi_last]) ** 2
    d = np.sum(ends * big_c, axis=0)
    d_tilde = np.sum(ends * big_c_tilde, axis=0)
    return NessCoefficients(big_c, big_c_tilde, d, d_tilde, d_tilde / (d + d_tilde))


def _mode_weights(sd: SpectralData, bath: BathConfig) -> np.ndarray:
    """Per-mode ``phi_0^2 phi_N^2 (C~_0 C_N - C_0 C~_N) / (d + d~)``.

    With ``e = exp(-beta E)`` the rate combination reduces to
    ``2 pi h0^2 hN^2 (e_0 - e_N) / (phi_0^2 h0^2 (1+e_0)(1-e_N) + phi_N^2 hN^2 (1-e_0)(1+e_N))``
    times ``phi_0^2 phi_N^2``. For equal smearing levels this is the usual
    ``(n_0 - n_N) / (phi_0^2 (2 n_0 + 1) + phi_N^2 (2 n_N + 1))`` form.
    """
    E = sd.energies
    a = bath.beta_left * E
    b = bath.beta_right * E
    if np.any(E <= 0):
        raise DomainError("mode energies must be positive")
    ea, eb = np.exp(-a), np.exp(-b)
    # e_0 - e_N without overflow or cancellation
    diff = np.sign(b - a) * np.exp(-np.minimum(a, b)) * -np.expm1(-np.abs(b - a))
    p0 = sd.phi_first**2
    pN = sd.phi_last**2
    h0sq, hNsq = bath.h_left**2, bath.h_right**2
    if bath.equal_h:
        den = p0 * (1 + ea) * -np.expm1(-b) + pN * -np.expm1(-a) * (1 + eb)
        num = 2 * np.pi * h0sq * p0 * pN * diff
    else:
        den = p0 * h0sq * (1 + ea) * -np.expm1(-b) + pN * hNsq * -np.expm1(-a) * (1 + eb)
        num = 2 * np.pi * h0sq * hNsq * p0 * pN * diff
    # both end weights below the smallest double: the mode carries nothing
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def spin_flow(sd: SpectralData, bath: BathConfig) -> float:
    return float(2 * bath.lam**2 * np.sum(_mode_weights(sd, bath)))


def heat_flow(sd: SpectralData, bath: BathConfig) -> float:
    return float(bath.lam**2 * np.sum(sd.energies * _mode_weights(sd, bath)))


def _require_mirror(sd: SpectralData, tol: float = MIRROR_TOL):
    gap = float(np.max(np.abs(sd.phi_first**2 - sd.phi_last**2)))
    if gap > tol:
        raise SymmetryError(f"chain is not mirror symmetric: max|phi_0^2 - phi_N^2| = {gap:.3e}")


def mirror_flows(sd: SpectralData, bath: BathConfig) -> tuple[float, float]:
    """Flows of a mirror-symmetric chain as ``<0| f(H + delta) |0>`` elements."""
    _require_mirror(sd)
    if not bath.equal_h:
        raise InvalidParameterError("matrix-element flows need equal smearing levels")
    half_diff = 0.5 * (bath.beta_right - bath.beta_left)
    half_sum = 0.5 * (bath.beta_right + bath.beta_left)
    pref = np.pi * bath.lam**2 * bath.h_left**2
    ratio = matrix_function(sd, lambda E: sinh_ratio(half_diff * E, half_sum * E))
    weighted = matrix_function(sd, lambda E: E * sinh_ratio(half_diff * E, half_sum * E))
    return float(2 * pref * ratio[0, 0]), float(pref * weighted[0, 0])


class FlowBounds(NamedTuple):
    spin: float
    heat: float
    spin_matrix: float
    heat_matrix: float


def flow_bounds(sd: SpectralData, bath: BathConfig) -> FlowBounds:
    """Upper bounds on the left flows when the left bath is hotter.

    ``spin``/``heat`` are the per-mode sums; ``*_matrix`` the looser bounds
    built from diagonal elements at both ends. With the right bath hotter
    every value changes sign and bounds the (negative) flows from below.
    """
    E = sd.energies
    a = bath.beta_left * E
    b = bath.beta_right * E
    g = _bound_kernel(a, b)
    pref = np.pi * bath.lam**2 * bath.h_left * bath.h_right
    overlap = np.abs(sd.phi_first * sd.phi_last)
    spin = 2 * pref * np.sum(overlap * g)
    heat = pref * np.sum(overlap * E * g)
    beta_l, beta_r = bath.beta_left, bath.beta_right
    G = matrix_function(sd, lambda E: _bound_kernel(beta_l * E, beta_r * E))
    EG = matrix_function(sd, lambda E: E * _bound_kernel(beta_l * E, beta_r * E))
    spin_matrix = pref * (G[0, 0] + G[-1, -1])
    heat_matrix = 0.5 * pref * (EG[0, 0] + EG[-1, -1])
    return FlowBounds(float(spin), float(heat), float(spin_matrix), float(heat_matrix))


def _energy_sq_over_sinh(E, T):
    x = E / T
    return 2.0 * E**2 * np.exp(-x) / -np.expm1(-2.0 * x)


def kappa(sd: SpectralData, temperature: float, h: float = 1.0, lam: float = 1.0) -> float:
    """Small-gap thermal conductivity of a mirror-symmetric chain at mean temperature ``T``.

    Uses the identification ``delta T = -N grad T`` with ``N`` the last site index.
    """
    _require_mirror(sd)
    if temperature <= 0:
        raise DomainError("temperature must be positive")
    N = sd.n_sites - 1
    F = matrix_function(sd, lambda E: _energy_sq_over_sinh(E, temperature))
    return float(np.pi * lam**2 * h**2 * N / (2 * temperature**2) * F[0, 0])


def conductivity(sd: SpectralData, bath: BathConfig) -> float:
    if not bath.equal_h:
        raise InvalidParameterError("conductivity needs equal smearing levels")
    return kappa(sd, bath.mean_temperature, bath.h_left, bath.lam)


def m_coefficient(sd: SpectralData) -> float:
    """``sum_k |phi_0(x_k) phi_N(x_k)| (x_k + delta)`` from the wavefunctions."""
    return float(np.sum(np.abs(sd.phi_first * sd.phi_last) * sd.energies))


def log_m_coefficient(spec: ChainSpec) -> float:
    """Natural log of the same coefficient, from eigenvalues and couplings only.

    For a Jacobi matrix ``phi_0(x_k) phi_N(x_k) = prod_n J_n / prod_{j != k} (x_k - x_j)``
    (residue of the corner resolvent element), which keeps full relative
    accuracy when the end overlaps are far below machine epsilon.
    """
    x = eigenvalues(spec)
    E = x + spec.delta
    if E[0] <= 0:
        raise GapError(E[0])
    log_j = np.sum(np.log(np.abs(spec.couplings)))
    gaps = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(gaps, 1.0)
    log_overlap = log_j - np.sum(np.log(gaps), axis=1)
    return float(logsumexp(log_overlap + np.log(E)))


def asymptotic_kappa(
    kind: Literal["homogeneous", "krawtchouk-half"],
    n_sites: int,
    e_min: float,
    e_max: float,
    temperature: float,
    h: float = 1.0,
    lam: float = 1.0,
) -> float:
    """Low-temperature conductivity asymptotes on the energy window ``[e_min, e_max]``."""
    N = n_sites - 1
    T = temperature
    if not 0 < e_min < e_max:
        raise InvalidParameterError(f"need 0 < e_min < e_max, got [{e_min}, {e_max}]")
    if kind == "homogeneous":
        return float(4 * np.sqrt(np.pi) * lam**2 * h**2 * e_min**2 * np.exp(-e_min / T)
                     / (np.sqrt(T) * (e_max - e_min) ** 2) * N)
    if kind == "krawtchouk-half":
        return float(np.pi * lam**2 * h**2 * e_min**2 * N / (T**2 * 2.0**N) * np.exp(-e_min / T))
    raise InvalidParameterError(f"no low-temperature asymptote for chain kind {kind!r}")


def high_gap_limits(sd: SpectralData, bath: BathConfig) -> tuple[float, float]:
    """Flows in the limit of an infinitely hot left bath.

    ``(2 pi hN^2 lam^2, pi hN^2 lam^2 (B_N + delta))``; ``B_N + delta`` is read
    off the spectral data as ``sum_k (x_k + delta) phi_N(x_k)^2``.
    """
    pref = np.pi * bath.lam**2 * bath.h_right**2
    end_energy = float(np.sum(sd.energies * sd.phi_last**2))
    return 2 * pref, pref * end_energy


@dataclass(frozen=True)
class CurrentReport:
    spin_flow_left: float
    heat_flow_left: float
    bound_spin: float
    bound_heat: float
    bound_spin_matrix: float
    bound_heat_matrix: float
    m_coefficient: float
    spin_limit: float
    heat_limit: float
    kappa: float | None = None
    spin_flow_matrix: float | None = None
    heat_flow_matrix: float | None = None
    matrix_rel_diff: float | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    def as_record(self) -> dict:
        record = asdict(self)
        record["notes"] = ",".join(self.notes)
        return record


def current_report(sd: SpectralData, bath: BathConfig) -> CurrentReport:
    notes = []
    mirror = sd.end_weights_symmetric(MIRROR_TOL)
    if mirror:
        notes.append("mirror-symmetric")
    t0, tn = bath.t_left, bath.t_right
    if abs(t0 - tn) <= SMALL_GAP_RATIO * bath.mean_temperature:
        notes.append("small-gap")
    if max(t0, tn) >= HIGH_GAP_RATIO * min(t0, tn):
        notes.append("high-gap")
    if sd.is_degenerate():
        notes.append("near-degenerate")
    q = spin_flow(sd, bath)
    hf = heat_flow(sd, bath)
    bounds = flow_bounds(sd, bath)
    spin_lim, heat_lim = high_gap_limits(sd, bath)
    extra = {}
    if mirror and bath.equal_h:
        qm, hm = mirror_flows(sd, bath)
        tiny = np.finfo(float).tiny
        rel = max(abs(qm - q) / max(abs(q), tiny), abs(hm - hf) / max(abs(hf), tiny))
        extra = dict(
            kappa=conductivity(sd, bath),
            spin_flow_matrix=qm,
            heat_flow_matrix=hm,
            matrix_rel_diff=rel if q != 0 or hf != 0 else 0.0,
        )
    return CurrentReport(
        spin_flow_left=q,
        heat_flow_left=hf,
        bound_spin=bounds.spin,
        bound_heat=bounds.heat,
        bound_spin_matrix=bounds.spin_matrix,
        bound_heat_matrix=bounds.heat_matrix,
        m_coefficient=m_coefficient(sd),
        spin_limit=spin_lim,
        heat_limit=heat_lim,
        notes=tuple(notes),
        **extra,
    )
