"""Command-line entry point: generate, solve, certify and welfare checks.

Exit codes: 0 success/pass, 1 certificate fail or dominated, 2 no
convergence, 3 input error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .certify import DimensionError, GridTooLarge, certify, check_partial_pareto, check_transfer_equilibrium
from .demand import DetailedAllocation
from .equilibrium import MarketState, SolveConfig, SolveResult, solve, solve_with_transfers
from .model import FAMILIES, InstanceError, MarketInstance, generate_instance, parse_instance

EXIT_OK, EXIT_FAIL, EXIT_NO_CONVERGENCE, EXIT_INPUT = 0, 1, 2, 3
LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "trace": logging.DEBUG}

log = logging.getLogger("digimkt")


class InputError(Exception):
    pass


@dataclass
class RunReport:
    command: str
    instance_digest: str | None
    config: dict[str, Any]
    outcome: str
    artifacts: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# state files


def state_to_dict(inst: MarketInstance, state: MarketState) -> dict[str, Any]:
    """Sparse triples for purchases (bread as category 0), dense y."""
    x = []
    for i, amount in enumerate(state.x.bread):
        if amount != 0:
            x.append([i, 0, "bread", float(amount)])
    for j in range(1, inst.g + 1):
        ids = inst.entity_ids(j)
        block = state.x.songs[j - 1]
        for i, k in zip(*np.nonzero(block)):
            x.append([int(i), j, ids[k], float(block[i, k])])
    x.sort(key=lambda t: (t[0], t[1]))
    d = [
        [int(i), int(j) + 1, float(state.x.excess[i, j])]
        for i, j in zip(*np.nonzero(state.x.excess))
    ]
    return {
        "prices": [float(p) for p in state.prices],
        "x": x,
        "d": d,
        "y": state.y.tolist(),
        "budgets": [float(b) for b in state.budgets],
    }


def state_from_dict(inst: MarketInstance, doc: Any) -> MarketState:
    n, g = inst.n, inst.g
    try:
        prices = np.array(doc["prices"], dtype=float)
        y = np.array(doc["y"], dtype=float)
        budgets = np.array(doc["budgets"], dtype=float)
        if prices.shape != (g + 1,) or y.shape != (n, g + 1) or budgets.shape != (n,):
            raise InputError("state dimensions do not match the instance")
        x = DetailedAllocation.zeros(inst)
        for buyer, cat, entity, amount in doc["x"]:
            if not 0 <= buyer < n or not 0 <= cat <= g:
                raise InputError(f"x entry {[buyer, cat, entity]} out of range")
            if cat == 0:
                x.bread[buyer] = float(amount)
                continue
            index = inst.entity_index(cat)
            if entity not in index:
                raise InputError(f"unknown entity {entity!r} in category {cat}")
            x.songs[cat - 1][buyer, index[entity]] = float(amount)
        for buyer, cat, amount in doc["d"]:
            if not 0 <= buyer < n or not 1 <= cat <= g:
                raise InputError(f"d entry {[buyer, cat]} out of range")
            x.excess[buyer, cat - 1] = float(amount)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed state: {exc}") from exc
    return MarketState(prices, x, y, budgets)


def dump_json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_log_csv(path: Path, rows: list[dict[str, float]], g: int) -> None:
    cols = ["iter", *[f"p_{j}" for j in range(g + 1)], "res_cond1", "res_cond2", "res_cond3", "total_earnings"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([int(row["iter"]), *(repr(float(row[c])) for c in cols[1:])])


# --------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _load_instance(path: str) -> tuple[MarketInstance, str]:
    text = _read_text(path)
    inst = parse_instance(text)
    return inst, hashlib.sha256(inst.to_json().encode()).hexdigest()


def _load_json(path: str) -> Any:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    d = SolveConfig()
    p.add_argument("--instance", required=True)
    p.add_argument("--rule", choices=["argmax", "multiplicative"], default=d.rule)
    p.add_argument("--eta", type=float, default=d.eta)
    p.add_argument("--damping", type=float, default=d.damping)
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--certify-every", type=int, default=d.certify_every)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--jitter", type=float, default=d.jitter, help="random perturbation of the starting prices")
    p.add_argument("--order", choices=["jacobi", "gauss_seidel"], default=d.order)
    p.add_argument("--response", choices=["damped", "proportional"], default=d.response)
    p.add_argument("--optimism", type=float, default=d.optimism)
    p.add_argument("--transfer-eta", type=float, default=d.transfer_eta)
    p.add_argument("--state-out", default="state.json")
    p.add_argument("--cert-out", default="certificate.json")
    p.add_argument("--log-out", default="iterations.csv")


def _config(args) -> SolveConfig:
    try:
        return SolveConfig(
            rule=args.rule,
            eta=args.eta,
            damping=args.damping,
            max_iters=args.max_iters,
            tol=args.tol,
            certify_every=args.certify_every,
            seed=args.seed,
            jitter=args.jitter,
            order=args.order,
            transfer_eta=args.transfer_eta,
            response=args.response,
            optimism=args.optimism,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="digimkt", description=__doc__.splitlines()[0])
    parser.add_argument("--report", help="write a JSON run report here")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--categories", type=int, required=True)
    p.add_argument("--songs", type=int, required=True)
    p.add_argument("--family", choices=FAMILIES, default="linear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="search for an equilibrium")
    _add_solver_flags(p)

    p = sub.add_parser("certify", help="check the equilibrium conditions of a state")
    p.add_argument("--instance", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", default="certificate.json")

    p = sub.add_parser("welfare1", help="bread-only Pareto check of a state")
    p.add_argument("--instance", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--grid-step", type=float, default=0.05)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-points", type=int, default=2_000_000)
    p.add_argument("--out", default="pareto.json")

    p = sub.add_parser("welfare2", help="equilibrium with wealth transfers hitting scaled targets")
    _add_solver_flags(p)
    p.add_argument("--targets", required=True, help='JSON list, or {"targets": [...]}')
    p.add_argument("--transfer-out", default="transfer.json")
    return parser


# --------------------------------------------------------------------------
# commands


def _cmd_gen(args, report: RunReport) -> int:
    try:
        inst = generate_instance(args.agents, args.categories, args.songs, args.family, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    text = inst.to_json()
    Path(args.out).write_text(text)
    report.instance_digest = hashlib.sha256(text.encode()).hexdigest()
    report.artifacts.append(args.out)
    report.outcome = "converged"
    return EXIT_OK


def _write_solve(args, inst: MarketInstance, result: SolveResult, report: RunReport) -> None:
    Path(args.state_out).write_text(dump_json(state_to_dict(inst, result.state)))
    Path(args.cert_out).write_text(dump_json(result.certificate.to_dict()))
    write_log_csv(Path(args.log_out), result.log, inst.g)
    report.artifacts += [args.state_out, args.cert_out, args.log_out]


def _cmd_solve(args, report: RunReport) -> int:
    inst, report.instance_digest = _load_instance(args.instance)
    config = _config(args)
    report.config = asdict(config)
    result = solve(inst, config)
    _write_solve(args, inst, result, report)
    print(result.certificate.summary())
    print(f"iterations: {result.iterations}")
    report.outcome = "converged" if result.converged else "max_iters"
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def _cmd_certify(args, report: RunReport) -> int:
    inst, report.instance_digest = _load_instance(args.instance)
    state = state_from_dict(inst, _load_json(args.state))
    report.config = {"tol": args.tol}
    cert = certify(inst, state, args.tol)
    Path(args.out).write_text(dump_json(cert.to_dict()))
    report.artifacts.append(args.out)
    print(cert.summary())
    report.outcome = "converged" if cert.passed else "cert_fail"
    return EXIT_OK if cert.passed else EXIT_FAIL


def _cmd_welfare1(args, report: RunReport) -> int:
    inst, report.instance_digest = _load_instance(args.instance)
    state = state_from_dict(inst, _load_json(args.state))
    report.config = {"grid_step": args.grid_step, "tol": args.tol, "max_points": args.max_points}
    if args.grid_step <= 0:
        raise InputError("grid step must be positive")
    try:
        verdict = check_partial_pareto(inst, state, args.grid_step, args.tol, args.max_points)
    except GridTooLarge as exc:
        raise InputError(str(exc)) from exc
    Path(args.out).write_text(dump_json(verdict.to_dict()))
    report.artifacts.append(args.out)
    print("dominated" if verdict.dominated else "not dominated", f"({verdict.evaluated} splits checked)")
    report.outcome = "cert_fail" if verdict.dominated else "converged"
    return EXIT_FAIL if verdict.dominated else EXIT_OK


def _cmd_welfare2(args, report: RunReport) -> int:
    inst, report.instance_digest = _load_instance(args.instance)
    doc = _load_json(args.targets)
    if isinstance(doc, dict):
        doc = doc.get("targets")
    try:
        targets = np.array(doc, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"targets: {exc}") from exc
    if targets.shape != (inst.n,) or np.any(targets <= 0):
        raise InputError("targets must be one positive number per agent")
    config = _config(args)
    report.config = asdict(config)
    result = solve_with_transfers(inst, targets, config)
    _write_solve(args, inst, result, report)
    transfer = result.transfer
    verdict = check_transfer_equilibrium(inst, result.state, transfer.w, targets, config.tol)
    out = {
        "w": transfer.w.tolist(),
        "gamma": transfer.gamma,
        "alpha": transfer.alpha,
        "targets": targets.tolist(),
        "achieved": transfer.achieved.tolist(),
        "deviations": transfer.deviations.tolist(),
        "verdict": verdict.to_dict(),
    }
    Path(args.transfer_out).write_text(dump_json(out))
    report.artifacts.append(args.transfer_out)
    print(f"alpha = {transfer.alpha:.9g}, max deviation = {verdict.max_deviation:.3e}")
    if not result.converged:
        report.outcome = "max_iters"
        return EXIT_NO_CONVERGENCE
    report.outcome = "converged" if verdict.passed else "cert_fail"
    return EXIT_OK if verdict.passed else EXIT_FAIL


COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "certify": _cmd_certify,
    "welfare1": _cmd_welfare1,
    "welfare2": _cmd_welfare2,
}


def run(argv: list[str] | None = None) -> int:
    level = os.environ.get("DIGIMKT_LOG", "quiet")
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(message)s")
    report = RunReport(command="", instance_digest=None, config={}, outcome="input_error")
    args = None
    try:
        args = build_parser().parse_args(argv)
        report.command = args.command
        code = COMMANDS[args.command](args, report)
    except (InputError, InstanceError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        report.outcome = "input_error"
        code = EXIT_INPUT
    if args is not None and args.report:
        Path(args.report).write_text(report.to_json())
    log.info("%s finished with outcome %s", report.command, report.outcome)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
