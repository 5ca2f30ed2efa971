"""Command-line entry point: ``xxness {spectrum,currents,sweep,oracle,pst-check}``.

Exit codes: 0 success, 1 validation failure (bad input, failed check),
2 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import yaml

from .chain import build_homogeneous, build_krawtchouk
from .config import RunConfig, format_record, load_yaml, parse_config
from .currents import current_report
from .errors import CapacityError, ConfigError, XXNessError
from .experiments import (
    Table,
    sweep_currents_vs_temperature,
    sweep_kappa_regimes,
    sweep_m_vs_size,
)
from .fock import DEFAULT_BATTERY_SEED, MAX_SITES, check_chain, default_battery, run_battery
from .spectral import diagonalize, transfer_fidelity
from .tolerances import merged

PST_SIZES = (3, 10, 25, 50)
PST_HOMOGENEOUS_N = 49


def _header(source: dict) -> str:
    text = yaml.safe_dump({"config": source}, sort_keys=False, default_flow_style=None)
    return "".join(f"# {line}\n" for line in text.splitlines())


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _require(cfg: RunConfig, what: str):
    if what == "chain" and cfg.chain is None:
        raise ConfigError("chain: required section is missing")
    if what == "bath" and cfg.bath is None:
        raise ConfigError("bath: required section is missing")
    if what == "sweep" and not cfg.sweep:
        raise ConfigError("sweep: required section is missing")


def cmd_spectrum(cfg: RunConfig, args) -> int:
    _require(cfg, "chain")
    sd = diagonalize(cfg.chain)
    full = args.full or cfg.spectrum_full
    _emit(_header(cfg.source) + sd.to_csv(full=full), args.output or cfg.output)
    return 0


def cmd_currents(cfg: RunConfig, args) -> int:
    _require(cfg, "chain")
    _require(cfg, "bath")
    report = current_report(diagonalize(cfg.chain), cfg.bath)
    record = {"n_sites": cfg.chain.n_sites, "beta_0": cfg.bath.beta_left,
              "beta_N": cfg.bath.beta_right, **report.as_record()}
    _emit(format_record(record), args.output or cfg.output)
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    _require(cfg, "sweep")
    kind, plan = cfg.sweep["kind"], cfg.sweep["plan"]
    if kind == "m-vs-size":
        results = sweep_m_vs_size(plan, cfg.sweep.get("fit_model"), threads=args.threads)
        tables = [res.to_table() for res in results]
        prov = dict(plan.provenance())
        fits = [t.provenance.get("fit") for t in tables]
        if any(fits):
            prov["fits"] = {res.family.label(): fit for res, fit in zip(results, fits)}
        table = Table(tables[0].columns, [row for t in tables for row in t.rows], prov)
    elif kind == "currents-vs-temperature":
        table = sweep_currents_vs_temperature(plan, threads=args.threads)
    else:
        table = sweep_kappa_regimes(plan, threads=args.threads)
    table.provenance = {"config": cfg.source, **table.provenance}
    _emit(table.to_csv(), args.output or cfg.output)
    return 0


def cmd_oracle(cfg: RunConfig, args) -> int:
    tol = merged(cfg.tolerances)
    if cfg.chain is not None:
        if cfg.chain.n_sites > MAX_SITES:
            raise CapacityError(f"{cfg.chain.n_sites} sites exceed the oracle cap of {MAX_SITES}")
        _require(cfg, "bath")
        verdicts = [check_chain("config", cfg.chain, cfg.bath, tol)]
    else:
        verdicts = run_battery(default_battery(int(cfg.oracle.get("seed", DEFAULT_BATTERY_SEED))), tol)
    lines = []
    for v in verdicts:
        status = "PASS" if v.passed else "FAIL " + ",".join(v.failures)
        gibbs = "n/a" if v.gibbs_distance is None else f"{v.gibbs_distance:.3e}"
        lines.append(
            f"{status:5s} {v.label:24s} sites={v.n_sites} beta=({v.beta_left:g},{v.beta_right:g}) "
            f"stationarity={v.stationarity:.3e} spin_rel={v.spin_rel_error:.3e} "
            f"heat_rel={v.heat_rel_error:.3e} balance={max(v.spin_balance, v.heat_balance):.3e} "
            f"gibbs={gibbs}")
    failed = sum(not v.passed for v in verdicts)
    lines.append(f"{len(verdicts) - failed}/{len(verdicts)} passed")
    _emit("\n".join(lines) + "\n", args.output or cfg.output)
    return 1 if failed else 0


def cmd_pst_check(cfg: RunConfig, args) -> int:
    tol = merged(cfg.tolerances)["pst"]
    sizes = cfg.pst.get("sizes", list(PST_SIZES))
    time = float(cfg.pst.get("time", math.pi))
    lines = ["chain,N,time,fidelity,expected,ok"]
    ok_all = True
    for N in sizes:
        f = transfer_fidelity(diagonalize(build_krawtchouk(int(N) + 1, 0.5, 1.0)), time)
        ok = abs(f - 1.0) <= tol
        ok_all &= ok
        lines.append(f"krawtchouk-p0.5,{N},{time!r},{f!r},1,{str(ok).lower()}")
    f = transfer_fidelity(diagonalize(build_homogeneous(PST_HOMOGENEOUS_N + 1, 3.0)), time)
    ok = f < 0.999
    ok_all &= ok
    lines.append(f"homogeneous,{PST_HOMOGENEOUS_N},{time!r},{f!r},<0.999,{str(ok).lower()}")
    _emit("\n".join(lines) + "\n", args.output or cfg.output)
    return 0 if ok_all else 1


COMMANDS = {
    "spectrum": cmd_spectrum,
    "currents": cmd_currents,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "pst-check": cmd_pst_check,
}


def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="YAML run configuration")
    parser.add_argument("--output", metavar="PATH", default=default, help="write results here instead of stdout")
    parser.add_argument("--seed", metavar="U64", type=int, default=default,
                        help="override perturbation seed and sweep base_seed")
    parser.add_argument("--threads", metavar="INT", type=int, default=default,
                        help="worker threads for sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xxness", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        _global_flags(p, suppress=True)
        if name == "spectrum":
            p.add_argument("--full", action="store_true", help="emit every wavefunction column")
    return parser


def _apply_seed(data: dict, seed: int):
    if not 0 <= seed < 2**64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    chain = data.get("chain")
    if isinstance(chain, dict) and isinstance(chain.get("perturbation"), dict):
        chain["perturbation"]["seed"] = seed
    sweep = data.get("sweep")
    if isinstance(sweep, dict):
        sweep["base_seed"] = seed
    oracle = data.get("oracle")
    if isinstance(oracle, dict):
        oracle["seed"] = seed


def load_run_config(args) -> RunConfig:
    if args.config is None:
        text, base = "", None
    else:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from None
        base = path.parent
    data = load_yaml(text) if text else {}
    if args.seed is not None and isinstance(data, dict):
        _apply_seed(data, args.seed)
    return parse_config(data, text, base)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args)
        return COMMANDS[args.command](cfg, args)
    except XXNessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
