"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Run on its own with ``pytest tests/test_acceptance.py -v``.
"""

import json
import logging
import math

import numpy as np
import pytest

from acceptance_log import record
from instances import EPSILONS, graph_corpus, grid, grid_instance, grid_optimum, rng_for
from otred import (
    build_packing_instance,
    complete_subfeasible,
    dual_objective,
    exact_ot,
    exact_packing_value,
    extend_coupling,
    hopcroft_karp,
    marginal_residuals,
    matching_to_ot,
    max_matching_via_ot,
    network_simplex,
    round_to_polytope,
    sinkhorn_scale,
    solve_ot_via_packing,
    solve_ot_via_scaling,
    solve_packing,
    transport_cost,
    truncate_marginals,
    validate_instance,
    vertex_enumeration,
)
from otred.cli import main, random_instance
from otred.io import write_matrix
from otred.scaling import Potentials, ScalingProblem, potential_radius

log = logging.getLogger(__name__)

SOLVERS = {"packing": solve_ot_via_packing, "scaling": solve_ot_via_scaling}


@pytest.mark.parametrize("method", ["packing", "scaling"])
def test_eps_optimality_grid(method):
    solve = SOLVERS[method]
    worst_ratio, worst_res, failures = 0.0, 0.0, []
    for n, kind, seed in grid():
        inst = grid_instance(n, kind, seed)
        opt = grid_optimum(n, kind, seed)
        for eps in EPSILONS:
            X, rep = solve(inst, eps)
            gap = transport_cost(inst.C, X) - opt
            res = marginal_residuals(X, inst.r, inst.c).l1_total
            worst_ratio = max(worst_ratio, gap / eps)
            worst_res = max(worst_res, res)
            if gap > eps + 1e-8 or res > 1e-8 or X.min() < 0:
                failures.append((n, kind, seed, eps, gap, res))
    ok = record(
        f"eps-optimality grid [{method}]",
        not failures,
        f"max gap/eps {worst_ratio:.3f}, max residual {worst_res:.2e}, {len(failures)} failures",
    )
    assert ok, failures[:5]


def test_packing_contract_grid():
    worst, failures = math.inf, []
    for n, kind, seed in grid():
        P = build_packing_instance(grid_instance(n, kind, seed))
        v_star = exact_packing_value(P).optimum
        for eps in EPSILONS:
            sol = solve_packing(P, eps)
            value = float(P.objective @ sol.x)
            excess = float((P.matvec(sol.x) - P.capacities).max())
            worst = min(worst, value / v_star if v_star > 0 else 1.0)
            if value < (1 - eps) * v_star or excess > 1e-9 or sol.x.min() < 0:
                failures.append((n, kind, seed, eps, value, v_star, excess))
    ok = record("packing contract d.x >= (1-eps) V*", not failures,
                f"min value/V* {worst:.4f}, {len(failures)} failures")
    assert ok, failures[:5]


def test_completion_identity():
    failures = 0
    for k in range(1000):
        rng = rng_for(11, k)
        n, m = (int(v) for v in rng.integers(1, 12, size=2))
        r = rng.random(n) + 1e-3
        c = rng.random(m) + 1e-3
        r, c = r / r.sum(), c / c.sum()
        X = network_simplex(rng.random((n, m)), r, c)[0] * rng.random((n, m))
        e_r = r - X.sum(axis=1)
        e_c = c - X.sum(axis=0)
        Y = complete_subfeasible(X, r, c)
        res = marginal_residuals(Y, r, c)
        if (abs(e_r.sum() - e_c.sum()) > 1e-10 or res.l1_total > 1e-10 or np.any(Y < X)):
            failures += 1
    ok = record("completion: |e_r|=|e_c|, Y feasible, Y >= X", failures == 0, f"{failures}/1000 failures")
    assert ok


def test_rounding_cost_bound():
    failures, worst = 0, -math.inf
    for k in range(1000):
        rng = rng_for(12, k)
        n, m = (int(v) for v in rng.integers(1, 12, size=2))
        r = rng.random(n) + 1e-3
        c = rng.random(m) + 1e-3
        r, c = r / r.sum(), c / c.sum()
        C = rng.random((n, m)) * rng.uniform(0.1, 10)
        B = np.outer(r, c) * rng.uniform(0.5, 1.5, size=(n, m))
        B = B / B.sum()
        resid = marginal_residuals(B, r, c).l1_total
        Xh = round_to_polytope(B, r, c, C)
        excess = transport_cost(C, Xh) - transport_cost(C, B) - 2 * C.max() * resid
        worst = max(worst, excess)
        if excess > 1e-8:
            failures += 1
    ok = record("rounding cost <= <C,B> + 2|C|_inf res(B)", failures == 0,
                f"{failures}/1000 failures, worst excess {worst:.2e}")
    assert ok


def test_truncation_composition():
    failures, checked = [], 0
    for k in range(200):
        rng = rng_for(13, k)
        n = int(rng.integers(3, 12))
        C = rng.random((n, n))
        eps = float(rng.choice([0.5, 0.2, 0.1]))
        thr = eps / (2 * C.max() * n)
        r, c = rng.random(n) + 0.1, rng.random(n) + 0.1
        # plant entries under the threshold on both sides
        r[rng.random(n) < 0.3] = thr * rng.uniform(0.01, 0.9)
        c[rng.random(n) < 0.3] = thr * rng.uniform(0.01, 0.9)
        r, c = r / r.sum(), c / c.sum()
        inst = validate_instance(C, r, c)
        tmap = truncate_marginals(r, c, eps, C.max())
        if tmap.is_identity:
            continue
        checked += 1
        sub = validate_instance(C[np.ix_(tmap.row_support, tmap.col_support)],
                                tmap.truncated_row.values, tmap.truncated_col.values)
        X = extend_coupling(exact_ot(sub).argmin_plan, tmap, r, c)
        gap = transport_cost(C, X) - exact_ot(inst).optimum
        res = marginal_residuals(X, r, c).l1_total
        if gap > eps + 1e-8 or res > 1e-12:
            failures.append((k, gap, eps, res))
    ok = record("truncate + extend composition", checked > 0 and not failures,
                f"{checked} truncated instances, {len(failures)} failures")
    assert ok, failures[:5]


def _random_scaling_problem(rng, n):
    L = -rng.uniform(0, 5, size=(n, n))
    r = rng.uniform(0.1, 1, n)
    c = rng.uniform(0.1, 1, n)
    return ScalingProblem(L, r / r.sum(), c / c.sum())


def test_potential_width_bound():
    worst, failures = 0.0, 0
    for k in range(50):
        rng = rng_for(14, k)
        n = int(rng.integers(2, 11))
        P = _random_scaling_problem(rng, n)
        z, res = sinkhorn_scale(P, 1e-10)
        bound = potential_radius(n, log_nu=P.log_entry_floor, xi=P.target_floor)
        norm = z.normalized().sup_norm
        worst = max(worst, norm / bound)
        if res.l1_total > 1e-10 or norm > bound + 0.1:
            failures += 1
    ok = record("normalized potentials within 2 log(n nu xi)", failures == 0,
                f"max |z|/bound {worst:.3f}, {failures}/50 failures")
    assert ok


def test_sinkhorn_monotonicity():
    failures, steps = 0, 0
    for k in range(50):
        rng = rng_for(15, k)
        P = _random_scaling_problem(rng, int(rng.integers(2, 21)))
        values = [dual_objective(P, Potentials(np.zeros(P.shape[0]), np.zeros(P.shape[1])))]
        sinkhorn_scale(P, 1e-12, callback=lambda x, y: values.append(dual_objective(P, Potentials(x, y))))
        steps += len(values) - 1
        if np.any(np.diff(values) > 1e-10):
            failures += 1
    ok = record("dual objective non-increasing per half-step", failures == 0,
                f"{steps} half-steps, {failures}/50 failing problems")
    assert ok


def _matching_epsilons(G):
    n = max(G.n_left, G.n_right)
    return (0.5, 1.0 / (2 * n))


@pytest.mark.parametrize("method", ["packing", "scaling"])
def test_matching_equivalence(method):
    mismatches, within_budget, total = [], 0, 0
    for density, G in graph_corpus():
        best = int(hopcroft_karp(G).optimum)
        n = max(G.n_left, G.n_right)
        for eps in _matching_epsilons(G):
            M, rep = max_matching_via_ot(G, eps, method)
            total += 1
            if M.size != best or not M.is_valid(G):
                mismatches.append((G.n_left, G.n_right, density, eps, M.size, best))
            if rep.augmentations <= n * eps + 1:
                within_budget += 1
            else:
                log.info("augmentations %d > n eps + 1 = %.2f (n=%d, density %.2f)",
                         rep.augmentations, n * eps + 1, n, density)
    share = within_budget / total
    record(f"augmentations <= n eps + 1 in >= 95% of cases [{method}] (soft)", share >= 0.95,
           f"{within_budget}/{total} = {share:.1%}")
    ok = record(f"matching size equals Hopcroft-Karp [{method}]", not mismatches,
                f"{total} solves, {len(mismatches)} mismatches")
    assert ok, mismatches[:5]


def test_matching_ot_value_identity():
    worst = 0.0
    for _, G in graph_corpus():
        inst = matching_to_ot(G)
        n = inst.shape[0]
        dev = abs(exact_ot(inst).optimum - (1 - hopcroft_karp(G).optimum / n))
        worst = max(worst, dev)
    ok = record("OT optimum = 1 - OPT_M / n", worst <= 1e-9, f"max deviation {worst:.2e}")
    assert ok


def test_oracle_self_consistency():
    worst, count = 0.0, 0
    shapes = [(n, m) for n in range(1, 17) for m in range(1, 17) if n * m <= 16]
    for k in range(500):
        rng = rng_for(16, k)
        n, m = shapes[k % len(shapes)]
        r = rng.random(n) + 1e-2
        c = rng.random(m) + 1e-2
        C = rng.random((n, m))
        inst = validate_instance(C, r / r.sum(), c / c.sum())
        a = exact_ot(inst).optimum
        b = vertex_enumeration(inst.C, inst.r, inst.c).optimum
        worst = max(worst, abs(a - b))
        count += 1
    ok = record("network simplex = vertex enumeration", worst <= 1e-9, f"{count} cases, max diff {worst:.2e}")
    assert ok


def _write_instance(tmp_path, inst, tag):
    paths = {k: tmp_path / f"{tag}_{k}.csv" for k in ("cost", "row", "col")}
    write_matrix(paths["cost"], inst.C)
    paths["row"].write_text("".join(f"{v!r}\n" for v in inst.r.tolist()))
    paths["col"].write_text("".join(f"{v!r}\n" for v in inst.c.tolist()))
    return paths


def _solve_twice_and_certify(tmp_path, inst, tag, method, eps):
    p = _write_instance(tmp_path, inst, tag)
    base = ["--cost", str(p["cost"]), "--row", str(p["row"]), "--col", str(p["col"]), "--eps", str(eps)]
    runs = []
    for k in range(2):
        plan, rep = tmp_path / f"{tag}_{method}_plan{k}.csv", tmp_path / f"{tag}_{method}_rep{k}.json"
        code = main(["solve", *base, "--method", method, "--seed", "7", "--out", str(plan), "--report", str(rep)])
        report = json.loads(rep.read_text())
        report.pop("wall_time_ms")
        runs.append((code, plan.read_bytes(), report))
    deterministic = runs[0][1] == runs[1][1] and runs[0][2] == runs[1][2]
    certify = main(["certify", *base, "--plan", str(tmp_path / f"{tag}_{method}_plan0.csv")])
    return runs[0][0], deterministic, certify


@pytest.mark.parametrize("method", ["packing", "scaling"])
def test_cli_determinism_and_round_trip(tmp_path, method):
    canon = validate_instance([[0, 1], [1, 0]], [0.5, 0.5], [0.5, 0.5])
    results = {
        "2x2": _solve_twice_and_certify(tmp_path, canon, "canon", method, 0.1),
        "20x20": _solve_twice_and_certify(tmp_path, random_instance(20, 3), "rand20", method, 0.1),
    }
    ok = all(r == (0, True, 0) for r in results.values())
    record(f"CLI determinism and solve->certify round trip [{method}]", ok,
           ", ".join(f"{k}: exit {r[0]}, identical {r[1]}, certify exit {r[2]}" for k, r in results.items()))
    assert ok, results


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
