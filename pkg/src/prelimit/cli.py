"""Command-line front end with reproducible seeds and machine-readable output.

Every output embeds the resolved configuration and the library version;
identical (config, seed) pairs produce byte-identical output.  Exit codes:
0 all embedded assertions pass, 1 an assertion or numeric check failed,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, backends, coupling, mm1
from .ctmc import RateKernel, ConstantRate, AffineRate, GatedRate, birth_death_poisson
from .ctmc import poisson_via_integral, solve_poisson
from .errors import PrelimitError
from .grids import GridFunction, LatticeSpec, sample_dlip, sample_dlip_higher
from .interchange import a_gx, interchange_report, mm1_boundary_interchange
from .interpolate import Interpolant

PASS, FAIL, USAGE = 0, 1, 2


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _jsonable(obj):
    """Recursively convert numpy scalars/arrays to plain Python values."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _emit_json(command: str, config: dict, results: dict, checks: dict) -> int:
    """Print the standard JSON envelope; exit status from the checks."""
    checks = {k: bool(v) for k, v in checks.items()}
    ok = all(checks.values())
    payload = {
        "command": command,
        "version": __version__,
        "config": _jsonable(config),
        "results": _jsonable(results),
        "checks": checks,
        "pass": ok,
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    if not ok:
        first = sorted(k for k, v in checks.items() if not v)[0]
        print(f"FAILED: {first}", file=sys.stderr)
        return FAIL
    return PASS


def _require_seed(cfg: dict) -> int:
    if cfg.get("seed") is None:
        raise SystemExit(USAGE)
    return int(cfg["seed"])


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(defaults)
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            for k, v in json.load(fh).items():
                if k in defaults:
                    cfg[k] = v
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


# -- interp ----------------------------------------------------------------

_DEMOS = {
    "const": lambda x: np.full_like(x, 2.5),
    "cubic": lambda x: x**3,
    "quadratic": lambda x: x**2,
    "abs": lambda x: np.abs(x),
}


def _cmd_interp(args) -> int:
    defaults = {
        "demo": "cubic",
        "fixture": None,
        "x": 0.0,
        "deriv": 0,
        "delta": 0.25,
    }
    cfg = _merge_config(args, defaults)
    if cfg["fixture"]:
        with open(cfg["fixture"]) as fh:
            f = GridFunction.from_json(fh.read())
    else:
        if cfg["demo"] not in _DEMOS:
            raise SystemExit(USAGE)
        spec = LatticeSpec(1, float(cfg["delta"]), (-8,), (24,))
        f = GridFunction.from_callable(spec, _DEMOS[cfg["demo"]])
    itp = Interpolant(f)
    x = float(cfg["x"])
    a = int(cfg["deriv"])
    value = itp.derivative(x, (a,)) if a else itp.evaluate(x)

    # property summary on this grid
    s = f.spec
    knots = s.delta * np.arange(s.lower[0], s.upper[0] - 3)
    knot_err = float(
        np.max(np.abs(itp.eval_many_1d(knots) - f.values[: len(knots)]))
    )
    from .interpolate import WEIGHTS, _horner

    rng = np.random.default_rng(0)
    pu_err = float(np.max(np.abs(_horner(WEIGHTS.coeffs, rng.random(256)).sum(axis=0) - 1.0)))
    results = {
        "x": x,
        "deriv": a,
        "value": value,
        "knot_interpolation_error": knot_err,
        "partition_of_unity_error": pu_err,
    }
    checks = {
        "knot_interpolation_error<=1e-12": knot_err <= 1e-12,
        "partition_of_unity_error<=1e-12": pu_err <= 1e-12,
    }
    return _emit_json("interp", cfg, results, checks)


# -- poisson ----------------------------------------------------------------


def _mm1_test_function(name: str, spec: LatticeSpec, seed) -> GridFunction:
    if name == "const":
        return GridFunction(spec, np.full(spec.shape, 1.0))
    if name == "identity":
        return GridFunction.from_callable(spec, lambda x: x)
    if name == "dlip":
        return sample_dlip(spec, int(seed))
    if name in ("dlip2", "dlip3"):
        return sample_dlip_higher(spec, int(name[-1]), int(seed))
    raise SystemExit(USAGE)


def _cmd_poisson(args) -> int:
    defaults = {
        "model": "mm1",
        "h": "const",
        "solver": "closed",
        "lam": 1.0,
        "mu": 2.0,
        "delta": 1.0,
        "upper": None,
        "horizon": 150.0,
        "steps": 512,
        "seed": 0,
    }
    cfg = _merge_config(args, defaults)
    if cfg["model"] != "mm1":
        raise SystemExit(USAGE)
    p = mm1.Mm1Params(float(cfg["lam"]), float(cfg["mu"]), float(cfg["delta"]))
    upper = int(cfg["upper"]) if cfg["upper"] is not None else mm1.default_upper(p)
    cfg["upper"] = upper
    spec = LatticeSpec(1, p.delta, (0,), (upper,))
    h = _mm1_test_function(cfg["h"], spec, cfg["seed"])
    kern = mm1.mm1_kernel(p, upper)
    if cfg["solver"] == "direct":
        sol = solve_poisson(kern, h)
    elif cfg["solver"] == "closed":
        sol = birth_death_poisson(p.lam, p.mu, p.delta, h)
    elif cfg["solver"] == "integral":
        sol = poisson_via_integral(
            kern, h, horizon=float(cfg["horizon"]), steps=int(cfg["steps"])
        )
    else:
        raise SystemExit(USAGE)
    resid = sol.info.get("residual")
    results = {
        "mean_h": sol.mean_h,
        "f_first_values": [float(v) for v in sol.values[:6]],
        "max_abs_f": float(np.max(np.abs(sol.values))),
        "info": {k: v for k, v in sol.info.items() if k != "residual"},
    }
    checks = {}
    if resid is not None:
        results["residual"] = resid
        checks["poisson_residual<=1e-10"] = resid <= 1e-10
    if cfg["h"] == "const":
        checks["constant_h_gives_zero_f"] = float(np.max(np.abs(sol.values))) <= 1e-12
    if cfg["solver"] == "integral":
        results["tail_estimate"] = sol.info.get("tail_estimate")
        results["warning"] = sol.info.get("warning")
    return _emit_json("poisson", cfg, results, checks)


# -- couple ------------------------------------------------------------------


def _cmd_couple(args) -> int:
    defaults = {
        "lam": 1.0,
        "mu": 2.0,
        "delta": 1.0,
        "k": 0,
        "order": None,
        "h": "identity",
        "reps": 10000,
        "seed": None,
        "horizon": None,
    }
    cfg = _merge_config(args, defaults)
    seed = _require_seed(cfg)
    p = mm1.Mm1Params(float(cfg["lam"]), float(cfg["mu"]), float(cfg["delta"]))
    k = int(cfg["k"])
    reps = int(cfg["reps"])
    if cfg["order"] is None:
        est = coupling.coupling_time_estimate(p, k, reps, seed)
        exact = (k + 1) / (p.mu - p.lam)
    else:
        order = int(cfg["order"])
        spec = mm1.stein_solve_spec(p, max(k, 20) + 40)
        h = _mm1_test_function(cfg["h"], spec, seed)
        est = coupling.estimate_delta(p, h, k, order, reps, seed)
        from .grids import difference_array

        sol = birth_death_poisson(p.lam, p.mu, p.delta, h)
        exact = float(difference_array(sol.grid, (order,))[k])
    z = 0.0 if est.stderr == 0 else (est.mean - exact) / est.stderr
    results = {
        "estimate": est.mean,
        "stderr": est.stderr,
        "replications": est.replications,
        "exact": exact,
        "z_score": z,
        "tau_mean": est.tau_mean,
        "tau_stderr": est.tau_stderr,
        "backend": backends.active_backend_name(),
    }
    return _emit_json("couple", cfg, results, {"abs_z<=3": abs(z) <= 3.0})


# -- stein -------------------------------------------------------------------


def _cmd_stein(args) -> int:
    defaults = {
        "lam": 1.0,
        "mu": 2.0,
        "delta": 1.0,
        "count": 50,
        "seed": None,
        "check_upper": None,
    }
    cfg = _merge_config(args, defaults)
    seed = _require_seed(cfg)
    p = mm1.Mm1Params(float(cfg["lam"]), float(cfg["mu"]), float(cfg["delta"]))
    check = (
        int(cfg["check_upper"])
        if cfg["check_upper"] is not None
        else mm1.default_upper(p)
    )
    cfg["check_upper"] = check
    spec = mm1.stein_solve_spec(p, check)
    count = int(cfg["count"])
    viol = {1: 0, 2: 0, 3: 0}
    viol_first = 0
    viol_daly = 0
    ident_max = 0.0
    for a in (1, 2, 3):
        for i in range(count):
            h = sample_dlip_higher(spec, a, seed=seed + 1000 * a + i)
            rep = mm1.stein_factor_report(p, h, a, check_upper=check)
            viol[a] += rep.violations
            viol_first += rep.violations_first
            if a == 3:
                ident_max = max(
                    ident_max, mm1.third_order_identity_residual(p, h)
                )
    for i in range(count):
        h = sample_dlip(spec, seed=seed + 9000 + i)
        rep = mm1.stein_factor_report(p, h, 3, check_upper=check)
        viol_daly += rep.violations_daly
    results = {
        "count_per_order": count,
        "violations_order1": viol[1],
        "violations_order2": viol[2],
        "violations_order3": viol[3],
        "violations_first_order_bound": viol_first,
        "violations_daly": viol_daly,
        "third_order_identity_max_residual": ident_max,
        "daly_bound": mm1.daly_bound(p),
    }
    checks = {
        "zero_bound_violations": sum(viol.values()) + viol_first + viol_daly == 0,
        "third_order_identity<=1e-10": ident_max <= 1e-10,
    }
    return _emit_json("stein", cfg, results, checks)


# -- interchange-check --------------------------------------------------------


def _cmd_interchange(args) -> int:
    defaults = {
        "model": "mm1",
        "x": "0.5",
        "seed": 0,
        "lam": 1.0,
        "mu": 2.0,
        "delta": 1.0,
    }
    cfg = _merge_config(args, defaults)
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    model = cfg["model"]
    xs = [float(v) for v in str(cfg["x"]).split(",")]
    if model == "mm1":
        p = mm1.Mm1Params(float(cfg["lam"]), float(cfg["mu"]), float(cfg["delta"]))
        upper = mm1.default_upper(p)
        spec = LatticeSpec(1, p.delta, (0,), (upper,))
        f = GridFunction(spec, rng.standard_normal(spec.shape))
        kern = mm1.mm1_kernel(p, upper)
        x = xs[0]
        lhs = a_gx(kern, f, x)
        main = mm1_boundary_interchange(p.lam, p.mu, p.delta, f, x)
        results = {"x": x, "lhs": lhs, "main_term": main, "epsilon": 0.0,
                   "residual": lhs - main}
        resid = abs(lhs - main)
    elif model == "affine":
        spec = LatticeSpec(1, 0.5, (0,), (40,))
        kern = RateKernel(
            spec,
            [((1,), AffineRate(1.0, (0.3,))), ((-1,), AffineRate(2.0, (0.1,)))],
        )
        f = GridFunction(spec, rng.standard_normal(spec.shape))
        rep = interchange_report(kern, f, xs[0])
        results = json.loads(rep.to_json())
        resid = abs(rep.residual)
    elif model == "product2d":
        spec = LatticeSpec(2, 0.5, (0, 0), (14, 14))
        kern = RateKernel(
            spec,
            [
                ((1, 0), AffineRate(1.0, (0.2, 0.0))),
                ((-1, 0), AffineRate(2.0, (0.1, 0.0))),
                ((0, 1), AffineRate(1.5, (0.0, 0.25))),
                ((0, -1), AffineRate(2.5, (0.0, 0.05))),
            ],
        )
        f = GridFunction(spec, rng.standard_normal(spec.shape))
        if len(xs) != 2:
            raise SystemExit(USAGE)
        rep = interchange_report(kern, f, xs)
        results = json.loads(rep.to_json())
        resid = abs(rep.residual)
    else:
        raise SystemExit(USAGE)
    return _emit_json(
        "interchange-check", cfg, results, {"abs_residual<=1e-10": resid <= 1e-10}
    )


# -- convergence ---------------------------------------------------------------


def _cmd_convergence(args) -> int:
    defaults = {"rho": "0.5,0.8,0.9,0.95,0.99", "mu": 1.0, "out": None}
    cfg = _merge_config(args, defaults)
    rhos = [float(v) for v in str(cfg["rho"]).split(",")]
    for r in rhos:
        if not 0 < r < 1:
            raise SystemExit(USAGE)
    sweep = mm1.convergence_sweep(rhos, mu=float(cfg["mu"]))
    lines = ["rho,delta,gap,bound_rhs,fitted_C,slope"]
    for row in sweep.rows:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    row.rho,
                    row.delta,
                    row.gap,
                    sweep.bound_rhs(row),
                    sweep.fitted_c,
                    sweep.slope,
                )
            )
        )
    csv_text = "\n".join(
        [f"# prelimit convergence v{__version__}", f"# config: {json.dumps(cfg, sort_keys=True)}"]
        + lines
    )
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(csv_text + "\n")
    else:
        print(csv_text)
    bound_ok = all(row.gap <= sweep.bound_rhs(row) * (1 + 1e-12) for row in sweep.rows)
    slope_ok = 0.8 <= sweep.slope <= 1.2 if len(rhos) > 1 else True
    results = {
        "fitted_C": sweep.fitted_c,
        "slope": sweep.slope,
        "rows": [
            {
                "rho": r.rho,
                "delta": r.delta,
                "gap": r.gap,
                "mean_lattice": r.mean_lattice,
                "mean_limit": r.mean_limit,
            }
            for r in sweep.rows
        ],
    }
    checks = {"gap<=fitted_bound": bound_ok}
    if len(rhos) > 1:
        checks["slope_in_[0.8,1.2]"] = slope_ok
    return _emit_json("convergence", cfg, results, checks)


# -- misalign -------------------------------------------------------------------


def _cmd_misalign(args) -> int:
    defaults = {
        "lam": 1.0,
        "mu": 2.0,
        "delta": 1.0,
        "eps": 0.25,
        "x0": 1.0,
        "dt": None,
        "reps": 1000,
        "seed": None,
        "horizon": None,
    }
    cfg = _merge_config(args, defaults)
    seed = _require_seed(cfg)
    p = mm1.Mm1Params(float(cfg["lam"]), float(cfg["mu"]), float(cfg["delta"]))
    rep = coupling.rbm_misalignment_demo(
        p,
        eps=float(cfg["eps"]),
        x0=float(cfg["x0"]),
        dt=None if cfg["dt"] is None else float(cfg["dt"]),
        reps=int(cfg["reps"]),
        seed=seed,
        horizon=None if cfg["horizon"] is None else float(cfg["horizon"]),
    )
    results = {
        "frac_window_ok": rep.frac_window_ok,
        "frac_window_ok_strict": rep.frac_window_ok_strict,
        "frac_reflection_clean": rep.frac_reflection_clean,
        "mean_gap_time": rep.mean_gap_time,
        "stderr_gap_time": rep.stderr_gap_time,
        "expected_gap_time": rep.expected_gap_time,
        "z_gap_time": rep.z_gap_time,
        "mean_r0_gamma1": rep.mean_r0_gamma1,
        "mean_r0_gamma2": rep.mean_r0_gamma2,
        "identity_dev_max": rep.identity_dev_max,
        "resampled": rep.resampled,
        "slack": rep.slack,
        "dt": rep.dt,
        "backend": backends.active_backend_name(),
    }
    checks = {
        "window_fraction>=0.99": rep.frac_window_ok >= 0.99,
        "abs_z_gap<=3": abs(rep.z_gap_time) <= 3.0,
    }
    return _emit_json("misalign", cfg, results, checks)


# -- parser ---------------------------------------------------------------------


def _add_common(sp, *names):
    if "lam" in names:
        sp.add_argument("--lambda", dest="lam", type=float, default=None)
    if "mu" in names:
        sp.add_argument("--mu", type=float, default=None)
    if "delta" in names:
        sp.add_argument("--delta", type=float, default=None)
    if "seed" in names:
        sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--config", type=str, default=None, help="JSON config file; flags win")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="prelimit",
        description="Lattice generator-comparison experiments with reproducible seeds",
    )
    ap.add_argument("--version", action="version", version=f"prelimit {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("interp", help="evaluate the spline extension of a demo grid")
    sp.add_argument("--demo", type=str, default=None, choices=sorted(_DEMOS))
    sp.add_argument("--fixture", type=str, default=None)
    sp.add_argument("--x", type=float, default=None)
    sp.add_argument("--deriv", type=int, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--config", type=str, default=None)
    sp.set_defaults(fn=_cmd_interp)

    sp = sub.add_parser("poisson", help="solve the stationary comparison equation")
    sp.add_argument("--model", type=str, default=None, choices=["mm1"])
    sp.add_argument("--h", type=str, default=None,
                    choices=["const", "identity", "dlip", "dlip2", "dlip3"])
    sp.add_argument("--solver", type=str, default=None,
                    choices=["direct", "closed", "integral"])
    sp.add_argument("--upper", type=int, default=None)
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--steps", type=int, default=None)
    _add_common(sp, "lam", "mu", "delta", "seed")
    sp.set_defaults(fn=_cmd_poisson)

    sp = sub.add_parser("couple", help="Monte-Carlo coupling estimates")
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--order", type=int, default=None, choices=[1, 2, 3])
    sp.add_argument("--h", type=str, default=None,
                    choices=["identity", "dlip", "dlip2", "dlip3"])
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--horizon", type=float, default=None)
    _add_common(sp, "lam", "mu", "delta", "seed")
    sp.set_defaults(fn=_cmd_couple)

    sp = sub.add_parser("stein", help="finite-difference bound sweep")
    sp.add_argument("--count", type=int, default=None)
    sp.add_argument("--check-upper", dest="check_upper", type=int, default=None)
    _add_common(sp, "lam", "mu", "delta", "seed")
    sp.set_defaults(fn=_cmd_stein)

    sp = sub.add_parser("interchange-check", help="verify the interchange identity")
    sp.add_argument("--model", type=str, default=None,
                    choices=["mm1", "affine", "product2d"])
    sp.add_argument("--x", type=str, default=None,
                    help="evaluation point; comma pair for 2-d models")
    _add_common(sp, "lam", "mu", "delta", "seed")
    sp.set_defaults(fn=_cmd_interchange)

    sp = sub.add_parser("convergence", help="heavy-traffic rate sweep")
    sp.add_argument("--rho", type=str, default=None, help="comma-separated utilizations")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--out", type=str, default=None, help="CSV output path")
    sp.add_argument("--config", type=str, default=None)
    sp.set_defaults(fn=_cmd_convergence)

    sp = sub.add_parser("misalign", help="reflected-path misalignment demo")
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--x0", type=float, default=None)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--horizon", type=float, default=None)
    _add_common(sp, "lam", "mu", "delta", "seed")
    sp.set_defaults(fn=_cmd_misalign)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else USAGE
        if code == USAGE:
            print("usage error: invalid or missing arguments", file=sys.stderr)
        return code
    except PrelimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAIL


if __name__ == "__main__":
    sys.exit(main())
