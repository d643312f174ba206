"""Command-line entry point.

Every subcommand prints one JSON report on stdout and a short human summary
on stderr. Exit codes: 0 success, 1 a numeric check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .core import (
    FEAS_TOL,
    INPUT_TOL,
    SUPPORT_TOL,
    InstanceFormatError,
    StochotError,
    instance_from_dict,
    instance_to_dict,
    load_json,
    plan_from_dict,
    validate_instance,
)
from .duality import (
    assemble_stochastic_duals,
    dual_value,
    lipschitz_smooth_cost,
    verify_duality_gap,
)
from .fuzz import random_instance
from .geometry import (
    CYCLE_TOL,
    c_subdifferential,
    c_transform,
    check_cyclical_monotonicity,
    default_max_cycle_len,
    rockafellar_potential,
    support_of,
    verify_equivalence,
)
from .kernel_metric import kr_dual_w1, pair_from_dict, scenario_costs_p, validate_pair, wasserstein_p
from .stochastic import is_feasible_kernel_plan, solve_stochastic

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT = 0, 1, 2

TOLERANCES = {
    "input": INPUT_TOL,
    "feasibility": FEAS_TOL,
    "support": SUPPORT_TOL,
    "cycle_defect": CYCLE_TOL,
}


class InputError(Exception):
    pass


# ---------------------------------------------------------------- output


def _format(obj: Any, indent: int, level: int) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        # 17 significant digits round-trip every double
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_format(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_format(v, indent, level) for v in obj) + "]"
        items = [pad + _format(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return _format(obj, 2, 0) + "\n"


def _digest(path: str) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _report(command: str, path: Optional[str], results: dict, extra: Optional[dict] = None) -> dict:
    out = {"command": command}
    if path is not None:
        out["instance_digest"] = _digest(path)
    if extra:
        out.update(extra)
    out["results"] = results
    out["tolerances"] = dict(TOLERANCES)
    return out


def _cycle_dict(cycle) -> Optional[dict]:
    if cycle is None:
        return None
    return {"pairs": [list(p) for p in cycle.pairs], "defect": cycle.defect}


# ---------------------------------------------------------------- input


def _read(path: str):
    try:
        return load_json(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    except InstanceFormatError as exc:
        raise InputError(str(exc)) from exc


def _load_instance(path: str):
    try:
        inst = instance_from_dict(_read(path))
    except InstanceFormatError as exc:
        raise InputError(f"{path}: {exc}") from exc
    report = validate_instance(inst)
    if not report.ok:
        raise InputError(
            f"{path}: invalid instance\n" + "\n".join(f"  {v}" for v in report.violations)
        )
    return inst


def _load_plan(path: str, inst):
    try:
        plan = plan_from_dict(_read(path))
    except InstanceFormatError as exc:
        raise InputError(f"{path}: {exc}") from exc
    ok, violations = is_feasible_kernel_plan(inst, plan)
    if not ok:
        raise InputError(
            f"{path}: infeasible plan\n" + "\n".join(f"  {v}" for v in violations)
        )
    return plan


def _load_pair(path: str, p: Optional[float] = None):
    try:
        pair = pair_from_dict(_read(path))
    except InstanceFormatError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if p is not None:
        pair = pair.with_p(p)
    report = validate_pair(pair)
    if not report.ok:
        raise InputError(
            f"{path}: invalid pair file\n" + "\n".join(f"  {v}" for v in report.violations)
        )
    return pair


# ---------------------------------------------------------------- commands


def cmd_validate(args):
    try:
        inst = instance_from_dict(_read(args.file))
    except InstanceFormatError as exc:
        raise InputError(f"{args.file}: {exc}") from exc
    report = validate_instance(inst)
    results = {
        "valid": report.ok,
        "violations": [{"location": v.location, "message": v.message} for v in report.violations],
    }
    summary = "valid" if report.ok else "\n".join(str(v) for v in report.violations)
    return _report("validate", args.file, results), summary, EXIT_OK if report.ok else EXIT_INPUT


def cmd_solve(args):
    inst = _load_instance(args.file)
    res = solve_stochastic(inst)
    results = {
        "value": res.value,
        "per_scenario_values": list(res.per_scenario_values),
        "plan": {"couplings": [c.tolist() for c in res.plan.couplings]},
    }
    return _report("solve", args.file, results), f"C_stoch = {float(res.value):.17g}", EXIT_OK


def cmd_duals(args):
    inst = _load_instance(args.file)
    solved = solve_stochastic(inst)
    dual = assemble_stochastic_duals(inst, solved)
    gap = verify_duality_gap(inst, solved.plan, dual)
    results = {
        "value": solved.value,
        "dual_value": gap.dual,
        "gap": gap.gap,
        "psi": [p.tolist() for p in dual.psi],
        "phi": [p.tolist() for p in dual.phi],
    }
    code = EXIT_OK if abs(gap.gap) <= FEAS_TOL else EXIT_CHECK_FAILED
    return _report("duals", args.file, results), f"dual = {float(gap.dual):.17g}, gap = {float(gap.gap):.3g}", code


def _max_len(args) -> int:
    return args.max_len if args.max_len is not None else default_max_cycle_len()


def cmd_check_cm(args):
    inst = _load_instance(args.file)
    extra = None
    if args.plan:
        plan = _load_plan(args.plan, inst)
        extra = {"plan_digest": _digest(args.plan)}
    else:
        plan = solve_stochastic(inst).plan
    limit = _max_len(args)
    per = []
    for k, (sc, pi) in enumerate(zip(inst.scenarios, plan.couplings)):
        supp = support_of(pi)
        bound = max(2, min(len(supp), limit))
        witness = check_cyclical_monotonicity(sc.cost, supp, bound) if len(supp) >= 2 else None
        per.append({
            "scenario": k,
            "support_size": len(supp),
            "max_len": bound,
            "monotone": witness is None,
            "witness": _cycle_dict(witness),
        })
    ok = all(s["monotone"] for s in per)
    results = {"monotone": ok, "scenarios": per}
    summary = "support is c-cyclically monotone" if ok else "violating cycle found"
    return _report("check-cm", args.file, results, extra), summary, EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_potentials(args):
    inst = _load_instance(args.file)
    solved = solve_stochastic(inst)
    per = []
    for k, (sc, pi) in enumerate(zip(inst.scenarios, solved.plan.couplings)):
        supp = support_of(pi)
        psi = rockafellar_potential(sc.cost, supp)
        phi = c_transform(sc.cost, psi)
        gamma = c_subdifferential(sc.cost, psi, phi)
        per.append({
            "scenario": k,
            "anchor": list(supp[0]),
            "psi": psi.tolist(),
            "phi": phi.tolist(),
            "support": [list(p) for p in supp],
            "gamma": [list(p) for p in gamma],
            "support_in_gamma": set(supp) <= set(gamma),
        })
    ok = all(s["support_in_gamma"] for s in per)
    results = {"value": solved.value, "scenarios": per}
    return _report("potentials", args.file, results), f"{len(per)} scenario potentials", (
        EXIT_OK if ok else EXIT_CHECK_FAILED
    )


def cmd_verify(args):
    inst = _load_instance(args.file)
    plan = _load_plan(args.plan, inst)
    rep = verify_equivalence(inst, plan, max_len=_max_len(args))
    results = {
        "value": rep.optimum,
        "plan_cost": rep.cost,
        "optimal": rep.optimal,
        "monotone": rep.monotone,
        "certified": rep.certified,
        "consistent": rep.consistent,
        "defects": rep.defects,
        "scenarios": [
            {
                "scenario": s.index,
                "optimal": s.optimal,
                "monotone": s.monotone,
                "certified": s.certified,
                "cost": s.cost,
                "optimum": s.optimum,
                "witness": _cycle_dict(s.witness),
            }
            for s in rep.scenarios
        ],
    }
    ok = rep.consistent and rep.optimal
    summary = f"optimal={rep.optimal} monotone={rep.monotone} certified={rep.certified}"
    return (
        _report("verify", args.file, results, {"plan_digest": _digest(args.plan)}),
        summary,
        EXIT_OK if ok else EXIT_CHECK_FAILED,
    )


def cmd_wp(args):
    pair = _load_pair(args.file, args.p)
    value = wasserstein_p(pair)
    results = {
        "p": pair.p,
        "value": value,
        "per_scenario_cost_p": list(scenario_costs_p(pair)),
    }
    return _report("wp", args.file, results), f"W_{pair.p:g} = {float(value):.17g}", EXIT_OK


def cmd_kr(args):
    pair = _load_pair(args.file)
    if pair.p != 1.0:
        pair = pair.with_p(1.0)
    kr = kr_dual_w1(pair)
    primal = wasserstein_p(pair)
    results = {
        "value": kr.value,
        "wasserstein_1": primal,
        "difference": kr.value - primal,
        "per_scenario_values": list(kr.scenario_values),
        "witnesses": [w.tolist() for w in kr.witnesses],
    }
    code = EXIT_OK if abs(kr.value - primal) <= FEAS_TOL else EXIT_CHECK_FAILED
    return _report("kr", args.file, results), f"KR = {float(kr.value):.17g}", code


def cmd_smooth(args):
    inst = _load_instance(args.file)
    if args.n <= 0:
        raise InputError(f"--n must be a positive integer, got {args.n}")
    per = [
        lipschitz_smooth_cost(sc.cost, inst.space_X, inst.space_Y, args.n).cost_n.tolist()
        for sc in inst.scenarios
    ]
    results = {"n": args.n, "costs": per}
    return _report("smooth", args.file, results), f"smoothed {len(per)} costs at n = {args.n}", EXIT_OK


def cmd_gen(args):
    for name in ("nx", "ny", "scenarios"):
        if getattr(args, name) < 1:
            raise InputError(f"--{name} must be at least 1")
    inst = random_instance(args.seed, args.nx, args.ny, args.scenarios)
    return instance_to_dict(inst), f"instance with seed {args.seed}", EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "duals": cmd_duals,
    "check-cm": cmd_check_cm,
    "potentials": cmd_potentials,
    "verify": cmd_verify,
    "wp": cmd_wp,
    "kr": cmd_kr,
    "smooth": cmd_smooth,
    "gen": cmd_gen,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochot", description="Exact stochastic optimal transport on finite scenario spaces."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in [
        ("validate", "check an instance file against every invariant"),
        ("solve", "optimal stochastic plan and its value"),
        ("duals", "assembled dual potentials, dual value and duality gap"),
        ("potentials", "per-scenario potentials, c-transforms and equality sets"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("file")

    p = sub.add_parser("check-cm", help="cyclical monotonicity of a plan's supports")
    p.add_argument("file")
    p.add_argument("--plan")
    p.add_argument("--max-len", type=int, dest="max_len")

    p = sub.add_parser("verify", help="optimality / monotonicity / certificate equivalence")
    p.add_argument("file")
    p.add_argument("--plan", required=True)
    p.add_argument("--max-len", type=int, dest="max_len")

    p = sub.add_parser("wp", help="p-Wasserstein distance between two kernels")
    p.add_argument("file")
    p.add_argument("--p", type=float)

    p = sub.add_parser("kr", help="Kantorovich-Rubinstein dual value and 1-Lipschitz witnesses")
    p.add_argument("file")

    p = sub.add_parser("smooth", help="Lipschitz smoothing of every scenario cost at level n")
    p.add_argument("file")
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("gen", help="seeded random instance on stdout")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--nx", type=int, default=3)
    p.add_argument("--ny", type=int, default=3)
    p.add_argument("--scenarios", type=int, default=2)
    return parser


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        report, summary, code = COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    except (StochotError, ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    stdout.write(dumps(report))
    print(summary, file=stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
