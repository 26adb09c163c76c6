"""Command-line driver: ``semilinear {validate,criterion,solve,verify,oracle}``.

Exit codes:

==  =====================================================================
0   success (hypotheses hold, criterion satisfied, solution verified)
1   input could not be parsed or the generator is invalid
2   the nonlinearity fails its hypotheses
3   spectral criterion not satisfied
4   solver did not converge or failed verification
5   a property suite or oracle check failed
==  =====================================================================
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunReport, load_config, write_csv
from .errors import (
    ConfigError,
    CriterionFailed,
    DivergingBranch,
    NegativeOffDiagonal,
    NoConvergence,
    NotIrreducible,
    ResidualTooLarge,
    SemilinearError,
)
from .feynman_kac import perturb, perturbed_semigroup
from .nonlinearity import validate_hypotheses
from .solver import HypothesisFailed, criterion, solve
from .state_model import resolvent_apply
from .stochastic_oracle import estimate_feynman_kac, estimate_resolvent_apply, supermartingale_probe
from .suites import SUITES, run_suites

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_HYPOTHESIS = 2
EXIT_CRITERION = 3
EXIT_CONVERGENCE = 4
EXIT_SUITE = 5

DEFAULT_SIZES = {
    "kato_inequality": 200,
    "spectral_radius_identity": 100,
    "potential_strict_monotonicity": 100,
    "truncation_orderings": 5,
    "doob_round_trip": 10,
    "uniqueness": 10,
    "concave_image": 100,
    "convexity_defect": 100,
    "supermedian_test_agreement": 100,
    "stochastic_oracle": 10,
    "oracle_paths": 20_000,
}


def _model_summary(model) -> dict:
    return {
        "n": model.n,
        "p": model.space.p,
        "sub_markovian": model.sub_markovian,
        "irreducible": model.irreducible,
        "spectral_bound": model.spectral_bound,
        "row_sums": model.row_sums,
    }


def _need_f(cfg):
    if cfg.nonlinearity is None:
        raise ConfigError("this command needs a nonlinearity")
    return cfg.nonlinearity


def cmd_validate(cfg, args) -> RunReport:
    f = _need_f(cfg)
    cert = validate_hypotheses(f, cfg.options.grid)
    results = {"generator": _model_summary(cfg.model), "hypotheses": cert}
    if cert.passed:
        return RunReport("validate", EXIT_OK, "pass", results)
    return RunReport("validate", EXIT_HYPOTHESIS, f"hypothesis {cert.failed} fails", results)


def cmd_criterion(cfg, args) -> RunReport:
    crit = criterion(cfg.model, _need_f(cfg))
    results = {"generator": _model_summary(cfg.model), "criterion": crit}
    if crit.satisfied:
        return RunReport("criterion", EXIT_OK, "satisfied", results)
    return RunReport("criterion", EXIT_CRITERION, "not satisfied", results)


def cmd_solve(cfg, args) -> RunReport:
    f = _need_f(cfg)
    cert = validate_hypotheses(f, cfg.options.grid)
    if not cert.passed:
        return RunReport("solve", EXIT_HYPOTHESIS, f"hypothesis {cert.failed} fails", {"hypotheses": cert})
    try:
        rep = solve(cfg.model, f, cfg.options, strict=cfg.strict or args.strict, uniqueness=cfg.uniqueness)
    except CriterionFailed as exc:
        return RunReport("solve", EXIT_CRITERION, "criterion not satisfied (strict)", {"solution": exc.report})
    except (NoConvergence, DivergingBranch, ResidualTooLarge) as exc:
        results = {"error": f"{type(exc).__name__}: {exc}"}
        if isinstance(exc, DivergingBranch):
            results["diagnostics"] = exc.diagnostics
        return RunReport("solve", EXIT_CONVERGENCE, "no convergence", results)
    results = {"generator": _model_summary(cfg.model), "solution": rep}
    if not rep.solved:
        return RunReport("solve", EXIT_CRITERION, "criterion not satisfied", results)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "u.csv", rep.u)
        results["u_csv"] = "u.csv"
    return RunReport("solve", EXIT_OK, "solved", results)


def _verify_sizes(cfg) -> dict:
    sizes = dict(DEFAULT_SIZES)
    sizes.update(cfg.verify.get("sizes", {}) if cfg else {})
    return sizes


def cmd_verify(cfg, args) -> RunReport:
    names = list((cfg.verify.get("suites") if cfg else None) or SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suites {unknown}")
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    results = run_suites(names, seed, _verify_sizes(cfg), fault=args.inject_fault)
    failing = [r.name for r in results if not r.passed]
    body = {"seed": seed, "suites": [r.to_json() for r in results], "failing": failing}
    if args.inject_fault:
        body["injected_fault"] = args.inject_fault
    timing = {r.name: r.elapsed for r in results}
    if failing:
        return RunReport("verify", EXIT_SUITE, "failing: " + ", ".join(failing), body, timing=timing)
    return RunReport("verify", EXIT_OK, "all suites pass", body, timing=timing)


def cmd_oracle(cfg, args) -> RunReport:
    """Statistical agreement suite, plus estimates on the configured model."""
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    sizes = _verify_sizes(cfg)
    if cfg:
        sizes.update({k: v for k, v in cfg.oracle.items() if k in ("stochastic_oracle", "oracle_paths")})
    suite = run_suites(["stochastic_oracle"], seed, sizes)[0]
    body = {"seed": seed, "suite": suite.to_json()}
    failing = [] if suite.passed else ["stochastic_oracle"]
    if cfg is not None and cfg.model.sub_markovian and cfg.model.spectral_bound < 0:
        o = cfg.oracle
        m = cfg.model
        paths = int(o.get("paths", 100_000))
        start = int(o.get("start", 0))
        g = np.asarray(o.get("g", np.ones(m.n)), float)
        alpha = float(o.get("alpha", 0.0))
        est = estimate_resolvent_apply(m, g, alpha, start, paths, seed)
        exact = float(resolvent_apply(m, g, alpha)[start])
        checks = {"resolvent": {"estimate": est.value, "std_error": est.std_error, "exact": exact}}
        V = np.asarray(o.get("V", np.zeros(m.n)), float)
        t = float(o.get("t", 1.0))
        est = estimate_feynman_kac(m, V, g, t, start, paths, seed + 1)
        exact_fk = float((perturbed_semigroup(perturb(m, V), t) @ g)[start])
        checks["feynman_kac"] = {"estimate": est.value, "std_error": est.std_error, "exact": exact_fk}
        v = resolvent_apply(m, g)
        probe = supermartingale_probe(m, v, o.get("t_grid", [0.0, 0.5, 1.0, 2.0, 4.0]), start, paths, seed + 2)
        checks["supermartingale_probe"] = {"points": probe.as_list(), "passed": probe.passed}
        for name in ("resolvent", "feynman_kac"):
            c = checks[name]
            c["within_3se"] = abs(c["estimate"] - c["exact"]) <= 3 * c["std_error"]
            if not c["within_3se"]:
                failing.append(f"model_{name}")
        if not probe.passed:
            failing.append("model_supermartingale_probe")
        body["model"] = checks
    body["failing"] = failing
    if failing:
        return RunReport("oracle", EXIT_SUITE, "failing: " + ", ".join(failing), body)
    return RunReport("oracle", EXIT_OK, "oracle agrees", body)


COMMANDS = {
    "validate": cmd_validate,
    "criterion": cmd_criterion,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semilinear", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name not in ("verify", "oracle"), help="problem config (JSON or YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=Path, default=None, help="directory for report.json and CSV output")
        p.add_argument("--strict", action="store_true", help="treat a failed criterion as an error")
        p.add_argument("--json", action="store_true", help="print the full report as JSON")
        if name == "verify":
            p.add_argument("--inject-fault", choices=["resolvent-sign"], default=None, help="self-test: break a primitive")
    return parser


def _ext(obj) -> str:
    return f"{obj['finite']:.10g}" if isinstance(obj, dict) else str(obj)


def _summary(report: RunReport) -> str:
    lines = [f"{report.command}: {report.status} (exit {report.exit_code})"]
    res = report.results
    if "hypotheses" in res and res["hypotheses"].get("witness"):
        lines.append(f"  witness (state, y, violation): {res['hypotheses']['witness']}")
    crit = res.get("criterion") or (res.get("solution") or {}).get("criterion")
    if crit:
        lines.append(f"  lambda1(a0) = {_ext(crit['lambda1_a0']['value'])}, lambda1(ainf) = {_ext(crit['lambda1_ainf']['value'])}")
    sol = res.get("solution")
    if sol and sol.get("u") is not None:
        lines.append(f"  u = {sol['u']}")
        lines.append(f"  residual = {sol['residual']:.3e}, doob = {sol['doob']}")
    for s in res.get("suites", []):
        lines.append(f"  {'PASS' if s['passed'] else 'FAIL'} {s['name']} ({s['instances']} instances)")
    if "error" in res:
        lines.append(f"  {res['error']}")
    return "\n".join(lines)


def run(argv=None) -> RunReport:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None and args.seed is not None:
            cfg.seed = args.seed
        report = COMMANDS[args.command](cfg, args)
    except (ConfigError, NegativeOffDiagonal, NotIrreducible, ValueError) as exc:
        report = RunReport(args.command, EXIT_PARSE, "input error", {"error": f"{type(exc).__name__}: {exc}"})
    except HypothesisFailed as exc:
        report = RunReport(args.command, EXIT_HYPOTHESIS, "hypothesis failure", {"error": str(exc)})
    except SemilinearError as exc:
        report = RunReport(args.command, EXIT_CONVERGENCE, "error", {"error": f"{type(exc).__name__}: {exc}"})
    report.timing.setdefault("total_seconds", time.perf_counter() - t0)
    report = report.normalized()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(report.serialize())
    print(report.serialize() if args.json else _summary(report), end="\n" if not args.json else "")
    return report


def main(argv=None) -> int:
    return run(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
