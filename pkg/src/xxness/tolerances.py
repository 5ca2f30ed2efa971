"""Default numerical tolerances, in one place so commands can override them."""

DEFAULT_TOLERANCES = {
    # oracle battery
    "stationarity": 1e-10,
    "gibbs_trace_distance": 1e-10,
    "current_rel": 1e-10,
    "current_abs_zero": 1e-12,
    "flow_balance": 1e-11,
    "anticommutator": 1e-12,
    "reconstruction": 1e-12,
    # spectral checks
    "orthonormality": 1e-10,
    "homogeneous_closed_form": 1e-10,
    "krawtchouk_closed_form": 1e-8,
    "pst": 1e-10,
    # currents
    "mirror_symmetry": 1e-8,
    "mirror_rel": 1e-9,
    "bound_slack": 1e-12,
}


def merged(overrides: dict | None = None) -> dict:
    out = dict(DEFAULT_TOLERANCES)
    if overrides:
        unknown = set(overrides) - set(out)
        if unknown:
            raise KeyError(f"unknown tolerance(s): {', '.join(sorted(unknown))}")
        out.update({k: float(v) for k, v in overrides.items()})
    return out
