"""Run configuration: a YAML document with named sections.

Sections: ``chain``, ``bath``, and per-command ``spectrum``, ``sweep``,
``oracle``, ``pst``, ``tolerances``; plus an optional top-level ``output``.
Errors name the offending field as a dotted path and, when the document
came from text, the line it sits on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .chain import ChainSpec, PerturbationSpec, apply_perturbation
from .currents import BathConfig
from .errors import ConfigError, XXNessError
from .experiments import FamilySpec, SweepPlan
from .tolerances import DEFAULT_TOLERANCES

SECTIONS = ("chain", "bath", "spectrum", "sweep", "oracle", "pst", "tolerances", "output")
CHAIN_KEYS = ("family", "n_sites", "p", "delta", "couplings", "fields", "window", "perturbation", "file")
BATH_KEYS = ("T_0", "beta_0", "T_N", "beta_N", "h", "h_0", "h_N", "lambda")
SWEEP_KINDS = ("m-vs-size", "currents-vs-temperature", "kappa-regimes")


class _Locator:
    """Maps dotted field paths to 1-based line numbers of a YAML document."""

    def __init__(self, text: str | None):
        self.lines: dict[str, int] = {}
        if text:
            try:
                self._walk(yaml.compose(text), "")
            except yaml.YAMLError:
                pass

    def _walk(self, node, prefix):
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                path = f"{prefix}.{key.value}" if prefix else str(key.value)
                self.lines[path] = key.start_mark.line + 1
                self._walk(value, path)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                path = f"{prefix}[{i}]"
                self.lines[path] = item.start_mark.line + 1
                self._walk(item, path)

    def line(self, path: str) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return None


class _Reader:
    def __init__(self, locator: _Locator):
        self.loc = locator

    def error(self, path: str, message: str) -> ConfigError:
        line = self.loc.line(path)
        where = f"{path} (line {line})" if line else path
        return ConfigError(f"{where}: {message}")

    def section(self, data: dict, name: str, allowed=None) -> dict:
        value = data.get(name.rpartition(".")[2]) if data is not None else None
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(name, "must be a mapping")
        if allowed is not None:
            unknown = [k for k in value if k not in allowed]
            if unknown:
                raise self.error(f"{name}.{unknown[0]}", f"unknown field (allowed: {', '.join(allowed)})")
        return value

    def number(self, sec: dict, path: str, default=None, positive=False, nonneg=False):
        key = path.rpartition(".")[2]
        if key not in sec or sec[key] is None:
            if default is None:
                raise self.error(path, "required field is missing")
            return default
        value = sec[key]
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise self.error(path, f"expected a number, got {value!r}")
        try:
            value = float(value)
        except ValueError:
            raise self.error(path, f"expected a number, got {value!r}") from None
        if not math.isfinite(value):
            raise self.error(path, "must be finite")
        if positive and value <= 0:
            raise self.error(path, f"must be > 0, got {value}")
        if nonneg and value < 0:
            raise self.error(path, f"must be >= 0, got {value}")
        return value

    def integer(self, sec: dict, path: str, default=None, minimum=None):
        key = path.rpartition(".")[2]
        if key not in sec or sec[key] is None:
            if default is None:
                raise self.error(path, "required field is missing")
            return default
        value = sec[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(path, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.error(path, f"must be >= {minimum}, got {value}")
        return value

    def vector(self, sec: dict, path: str):
        key = path.rpartition(".")[2]
        if key not in sec:
            raise self.error(path, "required field is missing")
        value = sec[key]
        if not isinstance(value, list) or not value:
            raise self.error(path, "expected a non-empty list of numbers")
        out = []
        for i, v in enumerate(value):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise self.error(f"{path}[{i}]", f"expected a number, got {v!r}")
            out.append(float(v))
        return out


@dataclass
class RunConfig:
    chain: ChainSpec | None = None
    family: FamilySpec | None = None
    bath: BathConfig | None = None
    spectrum_full: bool = False
    sweep: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    pst: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    source: dict = field(default_factory=dict)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.source, sort_keys=False)


def _parse_chain(r: _Reader, data: dict, base: Path | None):
    sec = r.section(data, "chain", CHAIN_KEYS)
    if not sec:
        return None, None
    if "file" in sec:
        path = Path(str(sec["file"]))
        if base is not None and not path.is_absolute():
            path = base / path
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise r.error("chain.file", f"cannot read chain document: {exc}") from None
        missing = [k for k in ("couplings", "fields", "delta") if k not in doc]
        if missing:
            raise r.error("chain.file", f"chain document is missing field {missing[0]!r}")
        try:
            return ChainSpec.from_dict(doc), None
        except XXNessError as exc:
            raise r.error("chain.file", str(exc)) from None
    family = sec.get("family", "explicit" if "couplings" in sec or "fields" in sec else None)
    if family is None:
        raise r.error("chain.family", "required field is missing (or give couplings and fields)")
    delta = r.number(sec, "chain.delta", 0.0, nonneg=True)
    pert = None
    psec = r.section(sec, "chain.perturbation", ("kind", "strength", "seed"))
    if psec:
        kind = psec.get("kind")
        if kind not in ("linear-field", "random-field"):
            raise r.error("chain.perturbation.kind", f"expected linear-field or random-field, got {kind!r}")
        strength = r.number(psec, "chain.perturbation.strength")
        seed = r.integer(psec, "chain.perturbation.seed", 0, minimum=0)
        try:
            pert = PerturbationSpec(kind, strength, seed)
        except XXNessError as exc:
            raise r.error("chain.perturbation", str(exc)) from None
    if family == "explicit":
        J = r.vector(sec, "chain.couplings")
        B = r.vector(sec, "chain.fields")
        if len(J) != len(B) - 1:
            raise r.error("chain.couplings", f"expected {len(B) - 1} couplings for {len(B)} fields, got {len(J)}")
        try:
            chain = ChainSpec(J, B, delta)
            if pert is not None:
                chain = apply_perturbation(chain, pert)
        except XXNessError as exc:
            raise r.error("chain", str(exc)) from None
        return chain, None
    if family not in ("homogeneous", "krawtchouk"):
        raise r.error("chain.family", f"expected homogeneous, krawtchouk or explicit, got {family!r}")
    n_sites = r.integer(sec, "chain.n_sites", minimum=2)
    p = r.number(sec, "chain.p", 0.5)
    if family == "krawtchouk" and not 0 < p < 1:
        raise r.error("chain.p", f"must lie in (0, 1), got {p}")
    window = None
    if "window" in sec:
        window = r.vector(sec, "chain.window")
        if len(window) != 2 or not 0 < window[0] < window[1]:
            raise r.error("chain.window", "expected [e_min, e_max] with 0 < e_min < e_max")
    fam = FamilySpec(family, n_sites, p, delta,
                     pert.kind if pert else "none", pert.strength if pert else 0.0, window)
    try:
        chain = fam.build(pert.seed if pert else 0)
    except XXNessError as exc:
        raise r.error("chain", str(exc)) from None
    return chain, fam


def _parse_temperature(r: _Reader, sec: dict, end: str) -> float:
    """Inverse temperature of one bath; exactly one of ``T_end``/``beta_end``."""
    t_key, b_key = f"T_{end}", f"beta_{end}"
    has_t, has_b = t_key in sec, b_key in sec
    if has_t and has_b:
        raise r.error(f"bath.{t_key}", f"ambiguous: both {t_key} and {b_key} given")
    if not (has_t or has_b):
        raise r.error(f"bath.{t_key}", f"one of {t_key} or {b_key} is required")
    if has_t:
        return 1.0 / r.number(sec, f"bath.{t_key}", positive=True)
    return r.number(sec, f"bath.{b_key}", positive=True)


def _parse_bath(r: _Reader, data: dict):
    sec = r.section(data, "bath", BATH_KEYS)
    if not sec:
        return None
    b0 = _parse_temperature(r, sec, "0")
    bN = _parse_temperature(r, sec, "N")
    if "h" in sec and ("h_0" in sec or "h_N" in sec):
        raise r.error("bath.h", "ambiguous: give either h or h_0/h_N")
    h = r.number(sec, "bath.h", 1.0, positive=True)
    h0 = r.number(sec, "bath.h_0", h, positive=True)
    hN = r.number(sec, "bath.h_N", h, positive=True)
    lam = r.number(sec, "bath.lambda", 1.0, positive=True)
    return BathConfig(b0, bN, h0, hN, lam)


def _parse_family(r: _Reader, entry, path: str) -> FamilySpec:
    if not isinstance(entry, dict):
        raise r.error(path, "must be a mapping")
    allowed = ("family", "n_sites", "p", "delta", "window", "perturbation", "xi")
    unknown = [k for k in entry if k not in allowed]
    if unknown:
        raise r.error(f"{path}.{unknown[0]}", "unknown field")
    kind = entry.get("family")
    if kind not in ("homogeneous", "krawtchouk"):
        raise r.error(f"{path}.family", f"expected homogeneous or krawtchouk, got {kind!r}")
    pert = entry.get("perturbation", "none")
    if pert not in ("none", "linear-field", "random-field"):
        raise r.error(f"{path}.perturbation", f"unknown perturbation {pert!r}")
    window = None
    if "window" in entry:
        window = r.vector(entry, f"{path}.window")
        if len(window) != 2 or not 0 < window[0] < window[1]:
            raise r.error(f"{path}.window", "expected [e_min, e_max] with 0 < e_min < e_max")
    return FamilySpec(
        kind,
        r.integer(entry, f"{path}.n_sites", 11, minimum=2),
        r.number(entry, f"{path}.p", 0.5),
        r.number(entry, f"{path}.delta", 0.0, nonneg=True),
        pert,
        r.number(entry, f"{path}.xi", 0.0),
        window,
    )


def _parse_sweep(r: _Reader, data: dict, bath: BathConfig | None) -> dict:
    allowed = ("kind", "families", "variable", "grid", "replicates", "base_seed",
               "temperatures", "fit_model", "want_std")
    sec = r.section(data, "sweep", allowed)
    if not sec:
        return {}
    kind = sec.get("kind")
    if kind not in SWEEP_KINDS:
        raise r.error("sweep.kind", f"expected one of {', '.join(SWEEP_KINDS)}, got {kind!r}")
    fams = sec.get("families")
    if not isinstance(fams, list) or not fams:
        raise r.error("sweep.families", "expected a non-empty list of chain families")
    families = tuple(_parse_family(r, f, f"sweep.families[{i}]") for i, f in enumerate(fams))
    default_var = "T_0" if kind == "currents-vs-temperature" else "n_sites"
    variable = sec.get("variable", default_var)
    grid = r.vector(sec, "sweep.grid")
    if variable == "n_sites":
        if any(g != int(g) for g in grid):
            raise r.error("sweep.grid", "n_sites grid must hold integers")
        grid = [int(g) for g in grid]
    temps = r.vector(sec, "sweep.temperatures") if "temperatures" in sec else []
    fit_model = sec.get("fit_model")
    if fit_model not in (None, "exp-in-N", "exp-in-NlogN"):
        raise r.error("sweep.fit_model", f"expected exp-in-N or exp-in-NlogN, got {fit_model!r}")
    try:
        plan = SweepPlan(
            families, variable, tuple(grid),
            bath if bath is not None else BathConfig(1.0, 1.0),
            r.integer(sec, "sweep.replicates", 1, minimum=1),
            r.integer(sec, "sweep.base_seed", 0, minimum=0),
            tuple(temps),
            bool(sec.get("want_std", True)),
        )
    except XXNessError as exc:
        raise r.error("sweep", str(exc)) from None
    return {"kind": kind, "plan": plan, "fit_model": fit_model}


def parse_config(data: Any, text: str | None = None, base: Path | None = None) -> RunConfig:
    """Validate a decoded document; ``text`` (if given) is used for line numbers."""
    r = _Reader(_Locator(text))
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping of sections")
    unknown = [k for k in data if k not in SECTIONS]
    if unknown:
        raise r.error(str(unknown[0]), f"unknown section (allowed: {', '.join(SECTIONS)})")
    chain, family = _parse_chain(r, data, base)
    bath = _parse_bath(r, data)
    spectrum = r.section(data, "spectrum", ("full",))
    pst = r.section(data, "pst", ("sizes", "p", "time"))
    oracle = r.section(data, "oracle", ("battery", "seed"))
    tolerances = r.section(data, "tolerances", tuple(DEFAULT_TOLERANCES))
    tol = {k: r.number(tolerances, f"tolerances.{k}", positive=True) for k in tolerances}
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise r.error("output", "expected a path string")
    return RunConfig(
        chain=chain,
        family=family,
        bath=bath,
        spectrum_full=bool(spectrum.get("full", False)),
        sweep=_parse_sweep(r, data, bath),
        oracle=oracle,
        pst=pst,
        tolerances=tol,
        output=output,
        source=data,
    )


def load_yaml(text: str):
    """Decode YAML text, reporting syntax errors with their line and column."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"{where}malformed configuration: {getattr(exc, 'problem', exc)}") from None


def parse_config_text(text: str, base: Path | None = None) -> RunConfig:
    return parse_config(load_yaml(text), text, base)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config_text(text, path.parent)


def format_record(record: dict) -> str:
    """Flat ``key = value`` lines; floats printed with round-trip precision."""
    lines = []
    for key, value in record.items():
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def parse_record(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, value = line.partition(" = ")
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out
