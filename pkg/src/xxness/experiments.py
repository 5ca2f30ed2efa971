"""Parameter sweeps, disorder ensembles and decay fits.

Every sweep returns a :class:`Table` (or an :class:`EnsembleResult`, which
converts to one) whose CSV header records the full plan for provenance.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
import yaml

from .chain import ChainSpec, PerturbationSpec, apply_perturbation, build_homogeneous, build_krawtchouk
from .currents import (
    BathConfig,
    asymptotic_kappa,
    high_gap_limits,
    kappa,
    log_m_coefficient,
    heat_flow,
    spin_flow,
)
from .errors import FitError, PlanError, SymmetryError
from .spectral import diagonalize, rescale_to_window

VARIABLES = ("n_sites", "T_0", "xi", "p")
FAMILIES = ("homogeneous", "krawtchouk")
MIN_REPLICATES_FOR_STD = 30


@dataclass(frozen=True)
class FamilySpec:
    """A chain family plus its builder arguments.

    ``window`` rescales the unperturbed spectrum onto ``[e_min, e_max]``
    before the perturbation is applied.
    """

    kind: Literal["homogeneous", "krawtchouk"]
    n_sites: int = 11
    p: float = 0.5
    delta: float = 0.0
    perturbation: Literal["none", "linear-field", "random-field"] = "none"
    xi: float = 0.0
    window: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise PlanError(f"unknown chain family {self.kind!r}")
        if self.perturbation not in ("none", "linear-field", "random-field"):
            raise PlanError(f"unknown perturbation {self.perturbation!r}")
        if self.window is not None:
            object.__setattr__(self, "window", tuple(float(v) for v in self.window))

    def label(self) -> str:
        name = self.kind if self.kind == "homogeneous" else f"krawtchouk-p{self.p:g}"
        if self.perturbation != "none":
            name += f"-{self.perturbation}-{self.xi:g}"
        return name

    def build(self, seed: int = 0, **overrides) -> ChainSpec:
        spec = FamilySpec(**{**asdict(self), **overrides})
        if spec.kind == "homogeneous":
            chain = build_homogeneous(spec.n_sites, spec.delta)
        else:
            chain = build_krawtchouk(spec.n_sites, spec.p, spec.delta)
        if spec.window is not None:
            chain = rescale_to_window(chain, *spec.window)
        if spec.perturbation != "none":
            chain = apply_perturbation(chain, PerturbationSpec(spec.perturbation, spec.xi, seed))
        return chain


@dataclass(frozen=True)
class SweepPlan:
    families: tuple[FamilySpec, ...]
    variable: Literal["n_sites", "T_0", "xi", "p"]
    grid: tuple
    bath: BathConfig = field(default_factory=lambda: BathConfig(1.0, 1.0))
    replicates: int = 1
    base_seed: int = 0
    temperatures: tuple[float, ...] = ()
    want_std: bool = True

    def __post_init__(self):
        fams = self.families
        if isinstance(fams, FamilySpec):
            fams = (fams,)
        object.__setattr__(self, "families", tuple(fams))
        object.__setattr__(self, "grid", tuple(self.grid))
        object.__setattr__(self, "temperatures", tuple(float(t) for t in self.temperatures))
        if not self.families:
            raise PlanError("plan has no chain family")
        if self.variable not in VARIABLES:
            raise PlanError(f"sweep variable must be one of {VARIABLES}, got {self.variable!r}")
        grid = np.asarray(self.grid, dtype=float)
        if grid.size == 0:
            raise PlanError("empty grid")
        if grid.size > 1 and not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
            raise PlanError("grid must be strictly monotone")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise PlanError(f"replicates must be a positive integer, got {self.replicates}")
        random = any(f.perturbation == "random-field" for f in self.families)
        if self.replicates > 1 and not random:
            raise PlanError("replicates > 1 only make sense for random-field families")
        if random and self.want_std and self.replicates < MIN_REPLICATES_FOR_STD:
            raise PlanError(
                f"a standard deviation needs at least {MIN_REPLICATES_FOR_STD} replicates, "
                f"got {self.replicates}")
        if not 0 <= int(self.base_seed) < 2**64:
            raise PlanError("base_seed must be an unsigned 64-bit integer")

    def provenance(self) -> dict:
        return {
            "families": [{k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(f).items()}
                         for f in self.families],
            "variable": self.variable,
            "grid": [float(g) if self.variable != "n_sites" else int(g) for g in self.grid],
            "bath": {"beta_left": self.bath.beta_left, "beta_right": self.bath.beta_right,
                     "h_left": self.bath.h_left, "h_right": self.bath.h_right, "lam": self.bath.lam},
            "replicates": int(self.replicates),
            "base_seed": int(self.base_seed),
            "temperatures": list(self.temperatures),
        }


def replicate_seed(base_seed: int, replicate: int, grid_index: int) -> int:
    """Seed for one replicate at one grid point, independent of every other."""
    ss = np.random.SeedSequence([int(base_seed), int(replicate), int(grid_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _threads(threads: int | None) -> int:
    if threads is None:
        return min(8, os.cpu_count() or 1)
    return max(1, int(threads))


def _ordered_map(fn, items, threads: int | None):
    """``[fn(i) for i in items]`` evaluated concurrently, returned in input order."""
    n = _threads(threads)
    if n == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Tables


@dataclass
class Table:
    columns: list[str]
    rows: list[list]
    provenance: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.provenance:
            header = yaml.safe_dump(self.provenance, sort_keys=False, default_flow_style=None)
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def read_provenance(text: str) -> dict:
    """Parse the ``#`` header of a CSV written by :meth:`Table.to_csv`."""
    lines = []
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        lines.append(line[2:] if line.startswith("# ") else line[1:])
    return yaml.safe_load("\n".join(lines)) or {}


# ---------------------------------------------------------------------------
# Fits


class DecayFit:
    __slots__ = ("model", "rate", "intercept", "r_squared", "residual")

    def __init__(self, model, rate, intercept, r_squared, residual):
        self.model = model
        self.rate = rate
        self.intercept = intercept
        self.r_squared = r_squared
        self.residual = residual

    def __iter__(self):
        return iter((self.rate, self.r_squared))

    def __repr__(self):
        return (f"DecayFit(model={self.model!r}, rate={self.rate!r}, intercept={self.intercept!r}, "
                f"r_squared={self.r_squared!r}, residual={self.residual!r})")


def fit_decay(sizes, log_means, model: Literal["exp-in-N", "exp-in-NlogN"] = "exp-in-N") -> DecayFit:
    """Least-squares fit of ``log M = c - rate * g(N)``.

    ``g(N) = N`` for ``exp-in-N`` and ``N log N`` for ``exp-in-NlogN``. The
    returned ``rate`` is minus the slope, so decay gives a positive rate;
    ``residual`` is the root-mean-square deviation of the fit.
    """
    N = np.asarray(sizes, dtype=float)
    y = np.asarray(log_means, dtype=float)
    if N.shape != y.shape or N.ndim != 1:
        raise FitError("sizes and log-means must be vectors of equal length")
    if N.size < 4:
        raise FitError(f"need at least 4 grid points, got {N.size}")
    if not (np.all(np.isfinite(N)) and np.all(np.isfinite(y))):
        raise FitError("non-finite sizes or log-means")
    if model == "exp-in-N":
        g = N
    elif model == "exp-in-NlogN":
        if np.any(N <= 0):
            raise FitError("N log N model needs positive sizes")
        g = N * np.log(N)
    else:
        raise FitError(f"unknown decay model {model!r}")
    if np.ptp(g) == 0:
        raise FitError("degenerate grid: all abscissae equal")
    A = np.column_stack([g, np.ones_like(g)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, intercept])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return DecayFit(model, float(-slope), float(intercept), r2, float(np.sqrt(ss_res / N.size)))


# ---------------------------------------------------------------------------
# M(H + delta) versus size


@dataclass
class EnsembleResult:
    """Per-grid-point statistics of ``log M`` for one chain family.

    ``mean``/``std`` are over replicates of ``M`` itself; ``log_mean`` is
    ``log`` of ``mean``, computed without leaving log space.
    """

    family: FamilySpec
    sizes: np.ndarray
    log_mean: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    fit: DecayFit | None = None
    provenance: dict = field(default_factory=dict)

    def to_table(self) -> Table:
        cols = ["family", "n_sites", "N", "log_mean_M", "mean_M", "std_M", "replicates"]
        rows = [[self.family.label(), int(n), int(n) - 1, lm, m, s, int(c)]
                for n, lm, m, s, c in zip(self.sizes, self.log_mean, self.mean, self.std, self.count)]
        prov = dict(self.provenance)
        if self.fit is not None:
            prov["fit"] = {"model": self.fit.model, "rate": self.fit.rate,
                           "intercept": self.fit.intercept, "r_squared": self.fit.r_squared,
                           "residual": self.fit.residual}
        return Table(cols, rows, prov)


def _log_stats(logs: np.ndarray) -> tuple[float, float, float]:
    """``log(mean)``, ``mean`` and sample ``std`` of ``exp(logs)``."""
    R = logs.size
    top = np.max(logs)
    scaled = np.exp(logs - top)
    m = scaled.mean()
    log_mean = float(top + np.log(m))
    std = float(np.exp(top) * scaled.std(ddof=1)) if R > 1 else 0.0
    return log_mean, float(np.exp(log_mean)), std


def sweep_m_vs_size(plan: SweepPlan, fit_model: str | None = None, threads: int | None = None) -> list[EnsembleResult]:
    """``M(H + delta)`` per size for every family of ``plan``.

    Values are carried as logarithms, since ``M`` drops far below the
    smallest double for large perturbed chains.
    """
    if plan.variable != "n_sites":
        raise PlanError(f"M-versus-size sweep needs variable n_sites, got {plan.variable!r}")
    sizes = np.asarray(plan.grid, dtype=int)
    if np.any(sizes < 2) or np.any(sizes != np.asarray(plan.grid, dtype=float)):
        raise PlanError("n_sites grid must hold integers >= 2")
    results = []
    for fam in plan.families:
        reps = plan.replicates if fam.perturbation == "random-field" else 1
        jobs = [(g, r) for g in range(sizes.size) for r in range(reps)]

        def one(job, fam=fam):
            g, r = job
            chain = fam.build(replicate_seed(plan.base_seed, r, g), n_sites=int(sizes[g]))
            return log_m_coefficient(chain)

        logs = np.array(_ordered_map(one, jobs, threads)).reshape(sizes.size, reps)
        stats = np.array([_log_stats(row) for row in logs])
        res = EnsembleResult(fam, sizes, stats[:, 0], stats[:, 1], stats[:, 2],
                             np.full(sizes.size, reps), provenance=plan.provenance())
        if fit_model is not None:
            res.fit = fit_decay(sizes - 1, res.log_mean, fit_model)
        results.append(res)
    return results


def linear_field_decay_rate(xi: float) -> float:
    """Exact decay rate ``log(1 + xi^2/4) / 2`` of ``M`` for the windowed Krawtchouk chain."""
    return 0.5 * float(np.log1p(xi**2 / 4.0))


# ---------------------------------------------------------------------------
# Currents versus T_0


def sweep_currents_vs_temperature(plan: SweepPlan, threads: int | None = None) -> Table:
    """Left-bath flows against ``T_0`` at fixed right bath, with high-gap limit lines.

    ``monotone`` flags whether spin and heat flows are both non-decreasing
    along the grid for that family (checked on the whole curve; repeated on
    every row for convenience).
    """
    if plan.variable != "T_0":
        raise PlanError(f"temperature sweep needs variable T_0, got {plan.variable!r}")
    temps = np.asarray(plan.grid, dtype=float)
    if np.any(temps <= 0):
        raise PlanError("temperatures must be positive")
    cols = ["family", "T_0", "T_N", "spin_flow", "heat_flow", "spin_limit", "heat_limit",
            "spin_fraction", "heat_fraction", "monotone"]
    rows = []
    for fam in plan.families:
        sd = diagonalize(fam.build(plan.base_seed))

        def one(T0, sd=sd):
            bath = BathConfig(1.0 / T0, plan.bath.beta_right, plan.bath.h_left,
                              plan.bath.h_right, plan.bath.lam)
            return spin_flow(sd, bath), heat_flow(sd, bath)

        flows = np.array(_ordered_map(one, temps, threads))
        order = np.argsort(temps)
        monotone = bool(np.all(np.diff(flows[order, 0]) >= 0) and np.all(np.diff(flows[order, 1]) >= 0))
        q_lim, h_lim = high_gap_limits(sd, plan.bath)
        for T0, (q, h) in zip(temps, flows):
            rows.append([fam.label(), float(T0), plan.bath.t_right, q, h, q_lim, h_lim,
                         q / q_lim, h / h_lim, monotone])
    return Table(cols, rows, plan.provenance())


# ---------------------------------------------------------------------------
# Conductivity regimes


def _asymptote_kind(fam: FamilySpec) -> str | None:
    if fam.perturbation != "none" or fam.window is None:
        return None
    if fam.kind == "homogeneous":
        return "homogeneous"
    if fam.kind == "krawtchouk" and fam.p == 0.5:
        return "krawtchouk-half"
    return None


def sweep_kappa_regimes(plan: SweepPlan, threads: int | None = None) -> Table:
    """``kappa`` on an ``(N, T)`` grid for mirror-symmetric families.

    Sizes come from the grid, temperatures from ``plan.temperatures``. When a
    family carries an energy window, the low-temperature asymptote is listed
    next to the exact value.
    """
    if plan.variable != "n_sites":
        raise PlanError(f"conductivity sweep needs variable n_sites, got {plan.variable!r}")
    if not plan.temperatures:
        raise PlanError("conductivity sweep needs at least one temperature")
    sizes = [int(n) for n in plan.grid]
    cols = ["family", "n_sites", "N", "T", "kappa", "kappa_over_N", "high_T_ratio",
            "kappa_asymptotic", "asymptotic_ratio"]
    rows = []
    for fam in plan.families:
        kind = _asymptote_kind(fam)

        def one(n, fam=fam, kind=kind):
            chain = fam.build(plan.base_seed, n_sites=n)
            sd = diagonalize(chain)
            if not sd.end_weights_symmetric():
                raise SymmetryError(f"{fam.label()} with {n} sites is not mirror symmetric")
            out = []
            b0 = float(np.sum(sd.energies * sd.phi_first**2))
            for T in plan.temperatures:
                k = kappa(sd, T, plan.bath.h_left, plan.bath.lam)
                high = k * 2 * T / (np.pi * plan.bath.lam**2 * plan.bath.h_left**2 * (n - 1) * b0)
                asym = (asymptotic_kappa(kind, n, *fam.window, T, plan.bath.h_left, plan.bath.lam)
                        if kind else float("nan"))
                out.append([fam.label(), n, n - 1, T, k, k / (n - 1), high, asym,
                            k / asym if kind else float("nan")])
            return out

        for block in _ordered_map(one, sizes, threads):
            rows.extend(block)
    return Table(cols, rows, plan.provenance())


def low_temperature_slope(sd, temperatures, h: float = 1.0, lam: float = 1.0) -> DecayFit:
    """Fit of ``log kappa`` against ``1/T``; ``-rate`` estimates ``-(x_0 + delta)``."""
    T = np.asarray(temperatures, dtype=float)
    logs = np.log([kappa(sd, t, h, lam) for t in T])
    return fit_decay(1.0 / T, logs, "exp-in-N")


__all__ = [
    "FamilySpec",
    "SweepPlan",
    "Table",
    "EnsembleResult",
    "DecayFit",
    "replicate_seed",
    "read_provenance",
    "fit_decay",
    "sweep_m_vs_size",
    "linear_field_decay_rate",
    "sweep_currents_vs_temperature",
    "sweep_kappa_regimes",
    "low_temperature_slope",
]
