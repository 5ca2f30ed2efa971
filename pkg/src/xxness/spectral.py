"""Single-excitation spectral data: eigenpairs of the tridiagonal matrix H.

Convention throughout: eigenvalues ascending, ``wavefunctions[n, k]`` is the
amplitude of mode ``k`` on site ``n``, and every column has a positive entry
on site 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .chain import ChainSpec
from .errors import GapError, InvalidParameterError, InvalidSizeError, NumericError

DEGENERACY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray
    wavefunctions: np.ndarray
    delta: float = 0.0

    def __post_init__(self):
        x = np.array(self.eigenvalues, dtype=float)
        U = np.array(self.wavefunctions, dtype=float)
        if U.shape != (x.size, x.size):
            raise InvalidSizeError(f"wavefunction matrix shape {U.shape} does not match {x.size} modes")
        if x[0] + self.delta <= 0:
            raise GapError(x[0] + self.delta)
        x.setflags(write=False)
        U.setflags(write=False)
        object.__setattr__(self, "eigenvalues", x)
        object.__setattr__(self, "wavefunctions", U)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n_sites(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def energies(self) -> np.ndarray:
        """Mode energies ``x_k + delta``."""
        return self.eigenvalues + self.delta

    @property
    def phi_first(self) -> np.ndarray:
        return self.wavefunctions[0]

    @property
    def phi_last(self) -> np.ndarray:
        return self.wavefunctions[-1]

    def min_gap(self) -> float:
        return float(np.min(np.diff(self.eigenvalues))) if self.n_sites > 1 else np.inf

    def is_degenerate(self, tol: float = DEGENERACY_TOL) -> bool:
        return self.min_gap() < tol

    def end_weights_symmetric(self, tol: float = 1e-8) -> bool:
        """True when ``phi_0(x_k)^2 == phi_N(x_k)^2`` for every mode."""
        return bool(np.max(np.abs(self.phi_first**2 - self.phi_last**2)) <= tol)

    def reflected(self) -> "SpectralData":
        """Spectral data of the mirror-image chain (rows reversed, re-signed)."""
        U = self.wavefunctions[::-1]
        return SpectralData(self.eigenvalues, U * np.sign(U[0]), self.delta)

    def to_csv(self, full: bool = True) -> str:
        """CSV text: ``k, x_k`` then ``phi_0..phi_N`` (or just the end sites)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        N = self.n_sites - 1
        if full:
            writer.writerow(["k", "x_k"] + [f"phi_{n}" for n in range(N + 1)])
            for k in range(N + 1):
                writer.writerow([k, repr(float(self.eigenvalues[k]))]
                                + [repr(float(v)) for v in self.wavefunctions[:, k]])
        else:
            writer.writerow(["k", "x_k", "x_k_plus_delta", "phi_0", f"phi_{N}"])
            for k in range(N + 1):
                writer.writerow([k] + [repr(float(v)) for v in (
                    self.eigenvalues[k], self.energies[k],
                    self.wavefunctions[0, k], self.wavefunctions[-1, k])])
        return buf.getvalue()


def _polynomial_signs(spec: ChainSpec, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Sign of ``phi_n(x_k) / phi_0(x_k)`` at ``n = rows[k]``.

    That ratio is ``det(x - H[:n, :n]) / prod(J[:n])``; the determinant sign
    comes from a Sturm count of negative pivots, so it stays reliable when
    ``phi_0`` itself is far below rounding level.
    """
    B, J = spec.fields, spec.couplings
    tiny = np.finfo(float).tiny
    signs = np.ones(x.size)
    with np.errstate(over="ignore", divide="ignore"):
        for k, (xk, n) in enumerate(zip(x, rows)):
            negatives = 0
            d = 1.0
            for i in range(n):
                # a pivot overflowing to -inf makes the next quotient -0, as it should
                d = (xk - B[i]) - (J[i - 1] ** 2 / d if i > 0 else 0.0)
                if d == 0.0:
                    d = tiny
                negatives += d < 0
            signs[k] = (-1.0) ** negatives * np.prod(np.sign(J[:n]))
    return signs


def _fix_signs(spec: ChainSpec, x: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Flip columns so that ``phi_0(x_k) > 0``.

    The sign is read off the largest component of each column rather than
    off ``phi_0``, which can underflow for strongly end-avoiding modes.
    """
    rows = np.argmax(np.abs(U), axis=0)
    cols = np.arange(x.size)
    target = _polynomial_signs(spec, x, rows)
    flip = np.sign(U[rows, cols]) * target
    if np.any(flip == 0):
        raise NumericError("eigenvector with vanishing dominant component")
    return U * flip


def eigenvalues(spec: ChainSpec) -> np.ndarray:
    """Ascending eigenvalues of ``H`` only (no eigenvectors)."""
    try:
        return eigh_tridiagonal(spec.fields, spec.couplings, eigvals_only=True)
    except LinAlgError as exc:
        raise NumericError(f"tridiagonal eigensolver failed: {exc}") from exc


def diagonalize(spec: ChainSpec) -> SpectralData:
    try:
        x, U = eigh_tridiagonal(spec.fields, spec.couplings)
    except LinAlgError as exc:
        raise NumericError(f"tridiagonal eigensolver failed: {exc}") from exc
    if x[0] + spec.delta <= 0:
        raise GapError(x[0] + spec.delta)
    return SpectralData(x, _fix_signs(spec, x, U), spec.delta)


def closed_form_homogeneous(n_sites: int, delta: float = 0.0) -> SpectralData:
    """Sine wavefunctions of the uniform ``J = 1`` chain.

    Mode ``j = 1..N+1`` has energy ``2 cos(j pi / (N + 2))``; they are listed
    here with ``j`` decreasing so the eigenvalues come out ascending.
    """
    if n_sites < 2:
        raise InvalidSizeError(f"n_sites must be >= 2, got {n_sites}")
    N = n_sites - 1
    j = np.arange(N + 1, 0, -1)
    n = np.arange(N + 1)
    theta = j * np.pi / (N + 2)
    x = 2.0 * np.cos(theta)
    U = np.sqrt(2.0 / (N + 2)) * np.sin(np.outer(n + 1, theta))
    return SpectralData(x, U, delta)


def krawtchouk_polynomials(N: int, p, x, ctx=None) -> list:
    """Rows ``K_n(x; p, N)`` for ``n = 0..N`` by the three-term recurrence.

    ``-x K_n = p(N-n) K_{n+1} - [p(N-n) + n(1-p)] K_n + n(1-p) K_{n-1}``.
    Arithmetic happens in ``ctx`` (an mpmath context) when given, in floats
    otherwise; the forward recurrence loses roughly ``N log10(1/min(p, 1-p))``
    digits in the tails, so double precision is only good for small ``N``.
    """
    one = ctx.mpf(1) if ctx is not None else 1.0
    p = one * p
    xs = [one * v for v in x]
    K = [[one] * len(xs)]
    if N >= 1:
        K.append([one - v / (p * N) for v in xs])
    for n in range(1, N):
        a = p * (N - n)
        c = n * (one - p)
        K.append([((a + c - v) * kn - c * km) / a for v, kn, km in zip(xs, K[n], K[n - 1])])
    return K


def _recurrence_digits(N: int, p: float) -> int:
    return 30 + int(np.ceil(2 * N * np.log10(1.0 / min(p, 1.0 - p))))


def closed_form_krawtchouk(n_sites: int, p: float, delta: float = 0.0) -> SpectralData:
    """Krawtchouk wavefunctions with spectrum ``x_k = k``.

    ``phi_n(k) = sqrt(C(N,k) C(N,n) p^(k+n) (1-p)^(N-k-n)) K_n(k)`` evaluated
    in extended precision; binomials and powers go through log-gamma.
    The textbook normalisation solves the recurrence with couplings ``-J_n``,
    so the factor ``(-1)^n`` maps it onto the chain built with ``+J_n``.
    """
    if n_sites < 2:
        raise InvalidSizeError(f"n_sites must be >= 2, got {n_sites}")
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"Krawtchouk parameter p must lie in (0, 1), got {p}")
    N = n_sites - 1
    ctx = mpmath.mp.clone()
    ctx.dps = _recurrence_digits(N, p)
    mp_p = ctx.mpf(p)
    log_p, log_q = ctx.log(mp_p), ctx.log(1 - mp_p)
    log_binom = [ctx.loggamma(N + 1) - ctx.loggamma(j + 1) - ctx.loggamma(N - j + 1)
                 for j in range(N + 1)]
    half_log_w = [(log_binom[j] + j * log_p + (N - j) * log_q) / 2 for j in range(N + 1)]
    half_log_h = [(log_binom[j] + j * (log_p - log_q)) / 2 for j in range(N + 1)]
    K = krawtchouk_polynomials(N, mp_p, range(N + 1), ctx=ctx)
    U = np.empty((N + 1, N + 1))
    for n in range(N + 1):
        sign = 1 if n % 2 == 0 else -1
        for k in range(N + 1):
            U[n, k] = sign * float(ctx.exp(half_log_h[n] + half_log_w[k]) * K[n][k])
    if not np.all(np.isfinite(U)):
        raise NumericError(f"Krawtchouk closed form is not finite at N={N}")
    return SpectralData(np.arange(N + 1, dtype=float), U, delta)


def matrix_function(sd: SpectralData, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """``U diag(f(x_k + delta)) U^T``."""
    E = sd.energies
    values = np.asarray(f(E), dtype=float)
    if values.shape != E.shape:
        values = np.broadcast_to(values, E.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericError(f"function is not finite at mode energy {E[bad][0]!r}")
    U = sd.wavefunctions
    out = (U * values) @ U.T
    return 0.5 * (out + out.T)


def transfer_fidelity(sd: SpectralData, time: float) -> float:
    """End-to-end single-excitation amplitude ``|<0| exp(-i t H) |N>|``."""
    amp = np.sum(sd.phi_first * sd.phi_last * np.exp(-1j * time * sd.eigenvalues))
    return float(abs(amp))


def rescale_to_window(spec: ChainSpec, e_min: float, e_max: float) -> ChainSpec:
    """Affinely map the mode energies ``[x_0 + delta, x_N + delta]`` onto ``[e_min, e_max]``.

    Couplings scale by the slope; the offset goes into ``delta`` when it is
    non-negative and into the fields otherwise.
    """
    if not 0 < e_min < e_max:
        raise InvalidParameterError(f"need 0 < e_min < e_max, got [{e_min}, {e_max}]")
    x = eigenvalues(spec)
    slope = (e_max - e_min) / (x[-1] - x[0])
    offset = e_min - slope * x[0]
    if offset >= 0:
        return ChainSpec(slope * spec.couplings, slope * spec.fields, offset)
    return ChainSpec(slope * spec.couplings, slope * spec.fields + offset, 0.0)
