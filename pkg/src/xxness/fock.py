"""Exact many-body check of the steady state and its currents.

Everything here lives in the full ``2^(N+1)``-dimensional spin Hilbert space.
Basis states are site-occupation bitstrings with site 0 as the least
significant bit; "occupied" means spin up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .chain import ChainSpec
from .currents import BathConfig, NessCoefficients, bose_occupation, heat_flow, ness_coefficients, spin_flow
from .errors import CapacityError
from .spectral import SpectralData, diagonalize
from .tolerances import merged

MAX_SITES = 12
MATERIALIZE_MAX_DIM = 16
DEFAULT_BATTERY_SEED = 2024


def _popcount(values: np.ndarray) -> np.ndarray:
    values = values.copy()
    count = np.zeros_like(values)
    while np.any(values):
        count += values & 1
        values >>= 1
    return count


@dataclass(frozen=True, eq=False)
class FockOperatorSet:
    spectral: SpectralData
    dimension: int
    site_lowering: list
    mode_lowering: list
    hamiltonian: sp.csr_matrix
    number_parity: sp.csr_matrix
    sigma_minus: list
    sigma_z: list

    @property
    def n_sites(self) -> int:
        return len(self.site_lowering)

    def total_sigma_z(self) -> sp.csr_matrix:
        return sum(self.sigma_z[1:], self.sigma_z[0]).tocsr()

    def mode_hamiltonian(self, coefficients, tilde=None) -> sp.csr_matrix:
        """``sum_k c_k b_k^+ b_k (+ c~_k b_k b_k^+)``."""
        out = sp.csr_matrix((self.dimension, self.dimension))
        for k, b in enumerate(self.mode_lowering):
            out = out + coefficients[k] * (b.T @ b)
            if tilde is not None:
                out = out + tilde[k] * (b @ b.T)
        return out.tocsr()


def build_fock_operators(sd: SpectralData, chain: ChainSpec | None = None) -> FockOperatorSet:
    """Jordan-Wigner fermions, mode operators and the many-body Hamiltonian.

    The Hamiltonian is assembled in spin language (XX exchange plus fields)
    from ``chain``; without it the tridiagonal matrix is rebuilt from ``sd``.
    """
    L = sd.n_sites
    if L > MAX_SITES:
        raise CapacityError(f"{L} sites exceed the dense Fock-space cap of {MAX_SITES}")
    dim = 2**L
    states = np.arange(dim)
    sigma_minus, sigma_z, site_lowering = [], [], []
    for n in range(L):
        cols = states[(states >> n) & 1 == 1]
        rows = cols ^ (1 << n)
        ones = np.ones(cols.size)
        sigma_minus.append(sp.csr_matrix((ones, (rows, cols)), shape=(dim, dim)))
        occ = ((states >> n) & 1).astype(float)
        sigma_z.append(sp.diags(2.0 * occ - 1.0, format="csr"))
        string = (-1.0) ** _popcount(cols & ((1 << n) - 1))
        site_lowering.append(sp.csr_matrix((string, (rows, cols)), shape=(dim, dim)))

    U = sd.wavefunctions
    mode_lowering = []
    for k in range(L):
        b = sp.csr_matrix((dim, dim))
        for n in range(L):
            b = b + U[n, k] * site_lowering[n]
        mode_lowering.append(b.tocsr())

    if chain is None:
        H1 = (U * sd.eigenvalues) @ U.T
        J = np.diag(H1, 1)
        B = np.diag(H1)
        delta = sd.delta
    else:
        J, B, delta = chain.couplings, chain.fields, chain.delta
    ham = sp.csr_matrix((dim, dim))
    for n in range(L - 1):
        hop = sigma_minus[n].T @ sigma_minus[n + 1] + sigma_minus[n] @ sigma_minus[n + 1].T
        ham = ham + J[n] * hop
    for n in range(L):
        ham = ham + 0.5 * (B[n] + delta) * (sp.identity(dim) + sigma_z[n])

    parity = sp.diags((-1.0) ** _popcount(states), format="csr")
    return FockOperatorSet(sd, dim, site_lowering, mode_lowering, ham.tocsr(), parity,
                           sigma_minus, sigma_z)


def anticommutator_errors(ops: FockOperatorSet) -> float:
    """Largest deviation from the canonical anticommutation relations."""
    eye = sp.identity(ops.dimension, format="csr")
    worst = 0.0
    a = ops.site_lowering
    for n in range(ops.n_sites):
        for m in range(ops.n_sites):
            ac = a[n].T @ a[m] + a[m] @ a[n].T - (eye if n == m else 0 * eye)
            aa = a[n] @ a[m] + a[m] @ a[n]
            worst = max(worst, abs(ac).max(), abs(aa).max())
    return float(worst)


def mode_basis(ops: FockOperatorSet) -> np.ndarray:
    """Columns ``|n> = prod_k (b_k^+)^{n_k} |0>`` indexed by the mode bitmask."""
    dim = ops.dimension
    W = np.zeros((dim, dim))
    W[0, 0] = 1.0
    creators = [b.T.tocsr() for b in ops.mode_lowering]
    for s in range(1, dim):
        low = (s & -s).bit_length() - 1
        W[:, s] = creators[low] @ W[:, s ^ (1 << low)]
    return W


class DissipatorMap:
    """``rho -> lam^2 sum_j rate_j (L_j rho L_j^+ - {L_j^+ L_j, rho}/2)`` applied functionally."""

    def __init__(self, jumps, lam: float = 1.0):
        self.jumps = [(float(rate), sp.csr_matrix(op)) for rate, op in jumps]
        self.lam = float(lam)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho)
        for rate, L in self.jumps:
            if rate == 0.0:
                continue
            Ld = L.T.conj()
            LdL = Ld @ L
            out += rate * ((L @ (Ld.T @ rho.T).T) - 0.5 * (LdL @ rho + (LdL.T @ rho.T).T))
        return self.lam**2 * out

    def adjoint(self, obs: np.ndarray) -> np.ndarray:
        """Heisenberg-picture action ``O -> lam^2 sum rate (L^+ O L - {L^+ L, O}/2)``."""
        obs = obs.toarray() if sp.issparse(obs) else np.asarray(obs)
        out = np.zeros(obs.shape, dtype=np.result_type(obs, float))
        for rate, L in self.jumps:
            if rate == 0.0:
                continue
            Ld = L.T.conj()
            LdL = Ld @ L
            out += rate * ((Ld @ (L.T @ obs.T).T) - 0.5 * (LdL @ obs + (LdL.T @ obs.T).T))
        return self.lam**2 * out

    def scale(self) -> float:
        return self.lam**2 * sum(abs(rate) for rate, _ in self.jumps)

    def matrix(self) -> np.ndarray:
        """Dense superoperator on row-major ``vec(rho)``; small systems only."""
        dim = self.jumps[0][1].shape[0] if self.jumps else 0
        if dim > MATERIALIZE_MAX_DIM:
            raise CapacityError(
                f"superoperator of dimension {dim}^2 is only applied, never materialized")
        eye = np.eye(dim)
        out = np.zeros((dim * dim, dim * dim))
        for rate, L in self.jumps:
            L = L.toarray()
            LdL = L.conj().T @ L
            out += rate * (np.kron(L, L.conj()) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
        return self.lam**2 * out


def build_dissipator_superoperator(
    ops: FockOperatorSet, coeffs: NessCoefficients, lam: float = 1.0
) -> DissipatorMap:
    """Emission ``b_k`` at rate ``d_k`` and absorption ``b_k^+`` at rate ``d~_k``."""
    jumps = []
    for k, b in enumerate(ops.mode_lowering):
        jumps.append((coeffs.d[k], b))
        jumps.append((coeffs.d_tilde[k], b.T))
    return DissipatorMap(jumps, lam)


def bath_dissipator(ops: FockOperatorSet, coeffs: NessCoefficients, bath: int, lam: float = 1.0) -> DissipatorMap:
    """Part of the dissipator due to one bath (0 = left, 1 = right)."""
    phi = ops.spectral.wavefunctions[0 if bath == 0 else -1]
    jumps = []
    for k, b in enumerate(ops.mode_lowering):
        jumps.append((phi[k] ** 2 * coeffs.big_c[bath, k], b))
        jumps.append((phi[k] ** 2 * coeffs.big_c_tilde[bath, k], b.T))
    return DissipatorMap(jumps, lam)


@dataclass(frozen=True, eq=False)
class NessDensityMatrix:
    weights: np.ndarray
    matrix: np.ndarray | None = None

    def mode_occupations(self) -> np.ndarray:
        n_modes = int(np.log2(self.weights.size))
        masks = np.arange(self.weights.size)
        return np.array([self.weights[(masks >> k) & 1 == 1].sum() for k in range(n_modes)])


def ness_weights(coeffs: NessCoefficients) -> np.ndarray:
    """``lambda_n = prod_k (n_k d~_k + (1 - n_k) d_k) / (d_k + d~_k)`` over mode bitmasks."""
    K = coeffs.n_modes
    if K > MAX_SITES:
        raise CapacityError(f"{K} modes exceed the cap of {MAX_SITES}")
    total = coeffs.d + coeffs.d_tilde
    empty = coeffs.d / total
    full = coeffs.d_tilde / total
    masks = np.arange(2**K)
    weights = np.ones(masks.size)
    for k in range(K):
        occ = (masks >> k) & 1
        weights *= np.where(occ == 1, full[k], empty[k])
    return weights


def ness_density_matrix(coeffs: NessCoefficients, ops: FockOperatorSet | None = None) -> NessDensityMatrix:
    weights = ness_weights(coeffs)
    if ops is None:
        return NessDensityMatrix(weights)
    W = mode_basis(ops)
    rho = (W * weights) @ W.T
    return NessDensityMatrix(weights, 0.5 * (rho + rho.T))


def gibbs_state(ops: FockOperatorSet, beta: float) -> np.ndarray:
    H = ops.hamiltonian.toarray()
    shift = np.min(np.diag(H))
    rho = expm(-beta * (H - shift * np.eye(ops.dimension)))
    return rho / np.trace(rho)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho - sigma))))


class StationarityCheck(NamedTuple):
    residual: float
    dissipator: float
    commutator: float
    lamb_shift: float
    scale: float


def verify_stationarity(
    ops: FockOperatorSet,
    coeffs: NessCoefficients,
    ness: NessDensityMatrix,
    lam: float = 1.0,
    seed: int = 0,
) -> StationarityCheck:
    """Max-norm residual of the Lindbladian on the candidate steady state.

    The Lamb shift is diagonal in the modes; it is checked structurally by
    commuting random ``sum_k (c_k b_k^+ b_k + c~_k b_k b_k^+)`` with ``rho``.
    """
    rho = ness.matrix
    D = build_dissipator_superoperator(ops, coeffs, lam)
    diss = float(np.max(np.abs(D(rho))))
    H = ops.hamiltonian
    comm = float(np.max(np.abs(H @ rho - (H.T @ rho.T).T)))
    rng = np.random.default_rng(seed)
    K = ops.n_sites
    H_ls = ops.mode_hamiltonian(rng.normal(size=K), rng.normal(size=K))
    lamb = float(np.max(np.abs(H_ls @ rho - (H_ls.T @ rho.T).T)))
    return StationarityCheck(diss + comm + lamb, diss, comm, lamb, D.scale())


class OracleCurrents(NamedTuple):
    spin_left: float
    spin_right: float
    heat_left: float
    heat_right: float


def oracle_currents(
    ops: FockOperatorSet, coeffs: NessCoefficients, ness: NessDensityMatrix, lam: float = 1.0
) -> OracleCurrents:
    """Bath-resolved flows as traces of adjoint dissipators against ``rho``."""
    rho = ness.matrix
    sz = ops.total_sigma_z()
    H = ops.hamiltonian
    values = []
    for bath in (0, 1):
        Dt = bath_dissipator(ops, coeffs, bath, lam)
        values.append((float(np.sum(Dt.adjoint(sz) * rho.T)), float(np.sum(Dt.adjoint(H) * rho.T))))
    (ql, hl), (qr, hr) = values
    return OracleCurrents(ql, qr, hl, hr)


# ---------------------------------------------------------------------------
# Lindblad operators S_i(omega) of the bath coupling


PLACEMENTS = ("none", "left", "right")


@dataclass(frozen=True, eq=False)
class LindbladOperatorSet:
    """Frequency components of the four coupling operators.

    ``components[i]`` lists ``(omega, S_i(omega))``; index 0/1 are the raising
    operators at sites 0/N (omega = -E_k), 2/3 the lowering ones (omega = +E_k).
    ``placement[i]`` is where the parity string sits in the component
    (``none``, ``left`` or ``right`` of the mode operator), chosen as the one
    whose components sum back to the bare spin operator.
    """

    components: dict
    placement: dict
    reconstruction_error: dict = field(default_factory=dict)

    def operator(self, i: int) -> sp.csr_matrix:
        return sum((S for _, S in self.components[i][1:]), self.components[i][0][1]).tocsr()


def build_lindblad_operators(ops: FockOperatorSet, sd: SpectralData | None = None) -> LindbladOperatorSet:
    sd = ops.spectral if sd is None else sd
    E = sd.energies
    P = ops.number_parity
    targets = {
        0: ops.sigma_minus[0].T.tocsr(),
        1: ops.sigma_minus[-1].T.tocsr(),
        2: ops.sigma_minus[0],
        3: ops.sigma_minus[-1],
    }
    ends = {0: sd.phi_first, 1: sd.phi_last, 2: sd.phi_first, 3: sd.phi_last}
    components, placement, errors = {}, {}, {}
    for i in range(4):
        raising = i < 2
        base = [(ops.mode_lowering[k].T if raising else ops.mode_lowering[k]).tocsr() for k in range(sd.n_sites)]
        errors[i] = {}
        candidates = {}
        for where in PLACEMENTS:
            if where == "none":
                parts = [ends[i][k] * base[k] for k in range(sd.n_sites)]
            elif where == "left":
                parts = [ends[i][k] * (P @ base[k]) for k in range(sd.n_sites)]
            else:
                parts = [ends[i][k] * (base[k] @ P) for k in range(sd.n_sites)]
            total = sum(parts[1:], parts[0])
            diff = total - targets[i]
            errors[i][where] = float(abs(diff).max()) if diff.nnz else 0.0
            candidates[where] = parts
        best = min(PLACEMENTS, key=lambda w: errors[i][w])
        placement[i] = best
        sign = -1.0 if raising else 1.0
        components[i] = [(sign * E[k], candidates[best][k].tocsr()) for k in range(sd.n_sites)]
    return LindbladOperatorSet(components, placement, errors)


def coupling_rates(omega: float, i: int, bath: BathConfig) -> float:
    """``gamma_ii(omega)`` for the four coupling channels (flat smearing)."""
    h = bath.h_left if i in (0, 2) else bath.h_right
    beta = bath.beta_left if i in (0, 2) else bath.beta_right
    if i in (0, 1):
        return 2 * np.pi * h**2 * bose_occupation(beta, -omega) if omega < 0 else 0.0
    return 2 * np.pi * h**2 * (bose_occupation(beta, omega) + 1.0) if omega > 0 else 0.0


def lindblad_dissipator(lops: LindbladOperatorSet, bath: BathConfig, channels=(0, 1, 2, 3)) -> DissipatorMap:
    """Dissipator assembled directly from ``S_i(omega)`` and ``gamma_ii(omega)``."""
    jumps = []
    for i in channels:
        for omega, S in lops.components[i]:
            jumps.append((coupling_rates(omega, i, bath), S))
    return DissipatorMap(jumps, bath.lam)


def oracle_rates(lops: LindbladOperatorSet, bath: BathConfig) -> tuple[np.ndarray, np.ndarray]:
    """Mode rates ``(d_k, d~_k)`` read back from the Lindblad operators.

    The squared amplitude of ``S_i(omega)`` relative to its bare mode operator
    is ``||S||_F^2 / (dim / 2)``.
    """
    n_modes = len(lops.components[0])
    d = np.zeros(n_modes)
    d_tilde = np.zeros(n_modes)
    for i in range(4):
        for k, (omega, S) in enumerate(lops.components[i]):
            dim = S.shape[0]
            weight = float(abs(S.multiply(S.conj())).sum()) / (dim / 2)
            rate = coupling_rates(omega, i, bath) * weight
            if i < 2:
                d_tilde[k] += rate
            else:
                d[k] += rate
    return d, d_tilde


# ---------------------------------------------------------------------------
# Battery


@dataclass
class OracleVerdict:
    label: str
    n_sites: int
    beta_left: float
    beta_right: float
    stationarity: float
    spin_closed: float
    spin_oracle: float
    heat_closed: float
    heat_oracle: float
    spin_rel_error: float
    heat_rel_error: float
    spin_balance: float
    heat_balance: float
    gibbs_distance: float | None
    passed: bool
    failures: list = field(default_factory=list)

    def as_record(self) -> dict:
        rec = dict(self.__dict__)
        rec["failures"] = ";".join(self.failures)
        return rec


def _rel_error(a: float, b: float, zero_tol: float) -> float:
    scale = max(abs(a), abs(b))
    if scale <= zero_tol:
        return 0.0
    return abs(a - b) / scale


def check_chain(label: str, chain: ChainSpec, bath: BathConfig, tolerances: dict | None = None) -> OracleVerdict:
    tol = merged(tolerances)
    sd = diagonalize(chain)
    ops = build_fock_operators(sd, chain)
    coeffs = ness_coefficients(sd, bath)
    ness = ness_density_matrix(coeffs, ops)
    stat = verify_stationarity(ops, coeffs, ness, bath.lam)
    cur = oracle_currents(ops, coeffs, ness, bath.lam)
    q = spin_flow(sd, bath)
    h = heat_flow(sd, bath)
    zero = tol["current_abs_zero"]
    q_err = _rel_error(q, cur.spin_left, zero)
    h_err = _rel_error(h, cur.heat_left, zero)
    gibbs = None
    if bath.beta_left == bath.beta_right and bath.equal_h:
        gibbs = trace_distance(ness.matrix, gibbs_state(ops, bath.beta_left))
    failures = []
    if stat.residual > tol["stationarity"]:
        failures.append("stationarity")
    if q_err > tol["current_rel"]:
        failures.append("spin-current")
    if h_err > tol["current_rel"]:
        failures.append("heat-current")
    if abs(cur.spin_left + cur.spin_right) > tol["flow_balance"]:
        failures.append("spin-balance")
    if abs(cur.heat_left + cur.heat_right) > tol["flow_balance"]:
        failures.append("heat-balance")
    if gibbs is not None and gibbs > tol["gibbs_trace_distance"]:
        failures.append("gibbs")
    return OracleVerdict(
        label=label,
        n_sites=chain.n_sites,
        beta_left=bath.beta_left,
        beta_right=bath.beta_right,
        stationarity=stat.residual,
        spin_closed=q,
        spin_oracle=cur.spin_left,
        heat_closed=h,
        heat_oracle=cur.heat_left,
        spin_rel_error=q_err,
        heat_rel_error=h_err,
        spin_balance=abs(cur.spin_left + cur.spin_right),
        heat_balance=abs(cur.heat_left + cur.heat_right),
        gibbs_distance=gibbs,
        passed=not failures,
        failures=failures,
    )


def default_battery(seed: int = DEFAULT_BATTERY_SEED) -> list[tuple[str, ChainSpec, BathConfig]]:
    """Chains x sizes x temperature pairs used by the acceptance run."""
    from .chain import PerturbationSpec, apply_perturbation, build_homogeneous, build_krawtchouk

    entries = []
    for N in (1, 2, 3):
        n_sites = N + 1
        chains = {
            "homogeneous": build_homogeneous(n_sites, 2.0),
            "krawtchouk-0.3": build_krawtchouk(n_sites, 0.3, 0.5),
            "krawtchouk-0.5": build_krawtchouk(n_sites, 0.5, 0.5),
            "homogeneous-random-0.4": apply_perturbation(
                build_homogeneous(n_sites, 2.0), PerturbationSpec("random-field", 0.4, seed)),
        }
        for label, chain in chains.items():
            for betas in ((0.1, 0.2), (1.0, 2.0), (0.5, 0.5)):
                entries.append((label, chain, BathConfig(*betas)))
    return entries


def run_battery(entries=None, tolerances: dict | None = None) -> list[OracleVerdict]:
    entries = default_battery() if entries is None else entries
    return [check_chain(label, chain, bath, tolerances) for label, chain, bath in entries]
