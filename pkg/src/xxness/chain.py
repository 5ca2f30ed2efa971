"""Chain parameter sets for the inhomogeneous XX model.

Sites are labelled ``0..N``; a chain with ``n_sites = N + 1`` sites carries
``N`` couplings ``J_0..J_{N-1}`` and ``N + 1`` local fields ``B_0..B_N``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import InvalidParameterError, InvalidSizeError

MIRROR_RTOL = 1e-12


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ChainSpec:
    couplings: np.ndarray
    fields: np.ndarray
    delta: float = 0.0

    def __post_init__(self):
        J = _frozen(np.atleast_1d(self.couplings))
        B = _frozen(np.atleast_1d(self.fields))
        if J.ndim != 1 or B.ndim != 1:
            raise InvalidSizeError("couplings and fields must be one-dimensional")
        if B.size < 2:
            raise InvalidSizeError(f"a chain needs at least 2 sites, got {B.size}")
        if J.size != B.size - 1:
            raise InvalidSizeError(
                f"expected {B.size - 1} couplings for {B.size} sites, got {J.size}"
            )
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(B))):
            raise InvalidParameterError("couplings and fields must be finite")
        if np.any(J == 0.0):
            raise InvalidParameterError(
                f"zero coupling at bond {int(np.flatnonzero(J == 0.0)[0])} disconnects the chain"
            )
        delta = float(self.delta)
        if not np.isfinite(delta) or delta < 0:
            raise InvalidParameterError(f"background field delta must be >= 0, got {delta}")
        object.__setattr__(self, "couplings", J)
        object.__setattr__(self, "fields", B)
        object.__setattr__(self, "delta", delta)

    @property
    def n_sites(self) -> int:
        return int(self.fields.size)

    @property
    def last_site(self) -> int:
        """The index ``N`` of the last site."""
        return self.n_sites - 1

    def matrix(self) -> np.ndarray:
        """Dense single-excitation matrix ``H`` (without ``delta``)."""
        return (
            np.diag(self.fields)
            + np.diag(self.couplings, 1)
            + np.diag(self.couplings, -1)
        )

    def with_fields(self, fields) -> "ChainSpec":
        return ChainSpec(self.couplings, fields, self.delta)

    def __eq__(self, other):
        if not isinstance(other, ChainSpec):
            return NotImplemented
        return (
            self.delta == other.delta
            and np.array_equal(self.couplings, other.couplings)
            and np.array_equal(self.fields, other.fields)
        )

    def __hash__(self):
        return hash((self.couplings.tobytes(), self.fields.tobytes(), self.delta))

    def to_dict(self) -> dict:
        return {
            "couplings": self.couplings.tolist(),
            "fields": self.fields.tolist(),
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainSpec":
        missing = [k for k in ("couplings", "fields", "delta") if k not in data]
        if missing:
            raise InvalidParameterError(f"chain document is missing key(s): {', '.join(missing)}")
        return cls(data["couplings"], data["fields"], data["delta"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ChainSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PerturbationSpec:
    kind: Literal["linear-field", "random-field"]
    strength: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("linear-field", "random-field"):
            raise InvalidParameterError(f"unknown perturbation kind {self.kind!r}")
        if not np.isfinite(self.strength):
            raise InvalidParameterError("perturbation strength must be finite")
        if self.kind == "random-field" and self.strength < 0:
            raise InvalidParameterError("random-field strength must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError("seed must be an unsigned 64-bit integer")


def build_homogeneous(n_sites: int, delta: float = 0.0) -> ChainSpec:
    """Uniform chain, ``J_n = 1`` and ``B_n = 0``."""
    if n_sites < 2:
        raise InvalidSizeError(f"n_sites must be >= 2, got {n_sites}")
    return ChainSpec(np.ones(n_sites - 1), np.zeros(n_sites), delta)


def build_krawtchouk(n_sites: int, p: float, delta: float = 0.0) -> ChainSpec:
    """Krawtchouk chain with spectrum ``x_k = k``.

    ``J_n = sqrt(p(1-p)) sqrt((n+1)(N-n))`` and ``B_n = p(N-n) + (1-p)n``.
    """
    if n_sites < 2:
        raise InvalidSizeError(f"n_sites must be >= 2, got {n_sites}")
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"Krawtchouk parameter p must lie in (0, 1), got {p}")
    N = n_sites - 1
    n = np.arange(n_sites, dtype=float)
    J = np.sqrt(p * (1.0 - p)) * np.sqrt((n[:-1] + 1.0) * (N - n[:-1]))
    B = p * (N - n) + (1.0 - p) * n
    return ChainSpec(J, B, delta)


def site_uniforms(seed: int, n_sites: int) -> np.ndarray:
    """Uniform draws on [0, 1), one per site.

    Philox is counter based, so draw ``i`` depends only on ``(seed, i)``;
    chains of different length share their common prefix.
    """
    return np.random.Generator(np.random.Philox(key=int(seed))).random(n_sites)


def apply_perturbation(spec: ChainSpec, pert: PerturbationSpec) -> ChainSpec:
    N = spec.last_site
    if pert.kind == "linear-field":
        shift = pert.strength * np.arange(spec.n_sites) / N
    else:
        shift = pert.strength * site_uniforms(pert.seed, spec.n_sites)
    return spec.with_fields(spec.fields + shift)


def reflect(spec: ChainSpec) -> ChainSpec:
    """Mirror image about the chain centre (site ``n`` goes to ``N - n``)."""
    return ChainSpec(spec.couplings[::-1], spec.fields[::-1], spec.delta)


def is_mirror_symmetric(spec: ChainSpec, rtol: float = MIRROR_RTOL) -> bool:
    J, B = spec.couplings, spec.fields
    scale = max(np.max(np.abs(J)), np.max(np.abs(B)), 1e-300)
    tol = rtol * scale
    return bool(
        np.all(np.abs(J - J[::-1]) <= tol) and np.all(np.abs(B - B[::-1]) <= tol)
    )
