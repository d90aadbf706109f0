"""``ot`` command line tool: solve, match, certify, bench."""

from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import math
import sys
import time

import numpy as np

from . import io
from .core import marginal_residuals, transport_cost, validate_instance
from .errors import NotConverged, OTError, TooLarge, ValidationError
from .matching import max_matching_via_ot
from .oracle import exact_ot, hopcroft_karp, max_oracle_vars
from .packing import solve_ot_via_packing
from .scaling import solve_ot_via_scaling

log = logging.getLogger("otred")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_CERTIFY_FAILED = 4

FEASIBILITY_TOL = 1e-8
GAP_SLACK = 1e-8
RNG_NAME = "PCG64"

SOLVERS = {"packing": solve_ot_via_packing, "scaling": solve_ot_via_scaling}


def _positive_eps(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"epsilon must be positive, got {text}")
    return value


def _load_instance(args):
    return validate_instance(io.read_matrix(args.cost), io.read_vector(args.row), io.read_vector(args.col))


def cmd_solve(args) -> int:
    inst = _load_instance(args)
    kwargs = {} if args.max_iters is None else {"max_iters": args.max_iters}
    try:
        plan, report = SOLVERS[args.method](inst, args.eps, **kwargs)
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.report:
            partial = {"schema": 1, "method": args.method, "epsilon": args.eps, "status": "not_converged"}
            partial.update(exc.report)
            partial["seed"] = args.seed
            io.write_report(args.report, partial)
        return EXIT_NOT_CONVERGED
    text = io.matrix_to_csv(plan)
    if args.out:
        io.write_matrix(args.out, plan)
    else:
        sys.stdout.write(text)
    if args.report:
        data = report.to_dict()
        data["status"] = "ok"
        data["seed"] = args.seed
        data["shape"] = list(inst.shape)
        io.write_report(args.report, data)
    summary = f"cost={report.cost!r} residual_l1={report.residual_l1:.3g} iterations={report.iterations}"
    print(summary, file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_match(args) -> int:
    G = io.read_graph(args.graph)
    kwargs = {} if args.max_iters is None else {"max_iters": args.max_iters}
    try:
        M, report = max_matching_via_ot(G, args.eps, args.method, **kwargs)
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(io.matching_to_text(M))
    print(f"size {M.size}")
    print(f"augmentations {report.augmentations}")
    if args.verify:
        best = int(hopcroft_karp(G).optimum)
        if best != M.size or not M.is_valid(G):
            print(f"verify FAILED: Hopcroft-Karp size {best}", file=sys.stderr)
            return EXIT_CERTIFY_FAILED
        print(f"verify ok (Hopcroft-Karp size {best})")
    return EXIT_OK


def cmd_certify(args) -> int:
    inst = _load_instance(args)
    plan = io.read_matrix(args.plan)
    if plan.shape != inst.shape:
        raise ValidationError(f"plan shape {plan.shape} does not match cost shape {inst.shape}")
    ok = True
    res = marginal_residuals(plan, inst.r, inst.c).l1_total
    negative = float(-plan.min()) if plan.min() < 0 else 0.0
    feasible = res <= FEASIBILITY_TOL and negative == 0.0
    print(f"residual_l1 {res!r}" + (f" (negative entry {-negative!r})" if negative else ""))
    ok &= feasible
    cost = transport_cost(inst.C, plan)
    try:
        optimum = exact_ot(inst).optimum
    except TooLarge:
        print(f"gap unavailable: {inst.shape[0]}x{inst.shape[1]} exceeds oracle cap {max_oracle_vars()}; "
              "feasibility-only certification")
    else:
        gap = cost - optimum
        print(f"gap {gap!r} (cost {cost!r}, optimum {optimum!r}, eps {args.eps!r})")
        ok &= gap <= args.eps + GAP_SLACK
    print("certified" if ok else "certification FAILED")
    return EXIT_OK if ok else EXIT_CERTIFY_FAILED


def _parse_list(text: str, kind, what: str):
    try:
        values = [kind(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValidationError(f"bad {what} list: {text!r}") from None
    if not values:
        raise ValidationError(f"empty {what} list")
    return values


def random_instance(n: int, seed: int):
    """Uniform [0, 1] costs with uniform marginals, drawn from PCG64 seeded by ``(seed, n)``."""
    rng = np.random.Generator(np.random.PCG64([seed, n]))
    C = rng.random((n, n))
    u = np.full(n, 1.0 / n)
    return validate_instance(C, u, u)


BENCH_FIELDS = ["n", "epsilon", "seed", "method", "status", "cost", "optimum", "gap",
                "iterations", "wall_time_ms", "rng"]


def run_bench(sizes, epsilons, seeds, methods):
    if any(n < 1 for n in sizes) or any(not (e > 0 and math.isfinite(e)) for e in epsilons) or seeds < 1:
        raise ValidationError("sizes and seeds must be positive, epsilons positive and finite")
    unknown = set(methods) - set(SOLVERS)
    if unknown:
        raise ValidationError(f"unknown methods: {sorted(unknown)}")
    cap = max_oracle_vars()
    for n in sizes:
        for seed in range(seeds):
            inst = random_instance(n, seed)
            optimum = exact_ot(inst).optimum if n * n <= cap else None
            for eps in epsilons:
                for method in methods:
                    row = {"n": n, "epsilon": eps, "seed": seed, "method": method, "rng": RNG_NAME}
                    start = time.perf_counter()
                    try:
                        _, rep = SOLVERS[method](inst, eps)
                    except NotConverged:
                        row.update(status="not_converged", cost="", optimum="", gap="", iterations="",
                                   wall_time_ms=int(round(1000 * (time.perf_counter() - start))))
                        yield row
                        continue
                    row.update(
                        status="ok",
                        cost=rep.cost,
                        optimum="" if optimum is None else optimum,
                        gap="" if optimum is None else rep.cost - optimum,
                        iterations=rep.iterations,
                        wall_time_ms=rep.wall_time_ms,
                    )
                    yield row


def cmd_bench(args) -> int:
    sizes = _parse_list(args.sizes, int, "sizes")
    epsilons = _parse_list(args.epsilons, float, "epsilons")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    rows = list(run_bench(sizes, epsilons, args.seeds, methods))
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: io.format_float(v) if isinstance(v, float) else v for k, v in row.items()})
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(buf.getvalue())
        print(f"wrote {len(rows)} rows to {args.csv}")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ot", description="Approximate optimal transport via packing LPs and matrix scaling.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def instance_args(p):
        p.add_argument("--cost", required=True, help="cost matrix CSV")
        p.add_argument("--row", required=True, help="row marginal, one value per line")
        p.add_argument("--col", required=True, help="column marginal, one value per line")

    p = sub.add_parser("solve", help="compute an eps-optimal coupling")
    instance_args(p)
    p.add_argument("--eps", type=_positive_eps, required=True)
    p.add_argument("--method", choices=sorted(SOLVERS), default="scaling")
    p.add_argument("--out", help="write the plan CSV here instead of stdout")
    p.add_argument("--report", help="write a JSON report here")
    p.add_argument("--seed", type=int, default=0, help="recorded in the report; solvers are deterministic")
    p.add_argument("--max-iters", type=int, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("match", help="maximum bipartite matching through optimal transport")
    p.add_argument("--graph", required=True, help="edge list with an 'n_left n_right' header")
    p.add_argument("--eps", type=_positive_eps, required=True)
    p.add_argument("--method", choices=sorted(SOLVERS), default="scaling")
    p.add_argument("--out", help="write matched pairs here")
    p.add_argument("--verify", action="store_true", help="cross-check against Hopcroft-Karp")
    p.add_argument("--max-iters", type=int, default=None)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("certify", help="check feasibility and eps-optimality of a plan")
    instance_args(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--eps", type=_positive_eps, required=True)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("bench", help="random-instance benchmark grid")
    p.add_argument("--sizes", default="10,20,50")
    p.add_argument("--epsilons", default="0.5,0.1,0.05")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--methods", default="packing,scaling")
    p.add_argument("--csv", help="write rows here instead of stdout")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors this way
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OTError, ValueError, OSError) as exc:
        if isinstance(exc, OTError) and not isinstance(exc, ValidationError):
            print(f"internal error: {exc}", file=sys.stderr)
            return EXIT_INTERNAL
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
