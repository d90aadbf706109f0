import numpy as np
import pytest

from otred.core import marginal_residuals, transport_cost, validate_instance
from otred.errors import TooLarge
from otred.graphs import BipartiteGraph
from otred.oracle import (
    exact_ot,
    exact_packing_value,
    hopcroft_karp,
    linprog_packing_value,
    max_oracle_vars,
    network_simplex,
    vertex_enumeration,
)
from otred.packing import PackingLP, build_packing_instance

HALF = [0.5, 0.5]


def _instance(rng, n, m, zeros=False):
    r, c = rng.random(n) + 0.01, rng.random(m) + 0.01
    if zeros and n > 1:
        r[0] = 0.0
    return validate_instance(rng.random((n, m)), r / r.sum(), c / c.sum())


def test_examples():
    assert exact_ot(validate_instance([[0, 1], [1, 0]], HALF, HALF)).optimum == 0.0
    assert exact_ot(validate_instance(np.ones((2, 2)), HALF, HALF)).optimum == pytest.approx(1.0)


def test_three_by_three_against_vertices():
    rng = np.random.default_rng(0)
    for _ in range(20):
        inst = _instance(rng, 3, 3)
        assert exact_ot(inst).optimum == pytest.approx(vertex_enumeration(inst.C, inst.r, inst.c).optimum, abs=1e-12)


def test_plan_is_feasible_and_optimal():
    rng = np.random.default_rng(1)
    for _ in range(20):
        inst = _instance(rng, int(rng.integers(1, 15)), int(rng.integers(1, 15)), zeros=True)
        sol = exact_ot(inst)
        assert marginal_residuals(sol.argmin_plan, inst.r, inst.c).l1_total <= 1e-10
        assert sol.argmin_plan.min() >= 0
        assert abs(transport_cost(inst.C, sol.argmin_plan) - sol.optimum) <= 1e-9


def test_permutation_invariance():
    rng = np.random.default_rng(2)
    for _ in range(20):
        inst = _instance(rng, 6, 8)
        p, q = rng.permutation(6), rng.permutation(8)
        moved = validate_instance(inst.C[np.ix_(p, q)], inst.r[p], inst.c[q])
        assert exact_ot(moved).optimum == pytest.approx(exact_ot(inst).optimum, abs=1e-12)


def test_constant_shift():
    rng = np.random.default_rng(3)
    for _ in range(20):
        inst = _instance(rng, 5, 5)
        kappa = float(rng.uniform(0, 5))
        shifted = validate_instance(inst.C + kappa, inst.r, inst.c)
        assert exact_ot(shifted).optimum == pytest.approx(exact_ot(inst).optimum + kappa, abs=1e-12)


def test_pivot_rules_agree():
    rng = np.random.default_rng(4)
    for _ in range(10):
        inst = _instance(rng, 12, 10)
        _, a, _ = network_simplex(inst.C, inst.r, inst.c, rule="bland")
        _, b, _ = network_simplex(inst.C, inst.r, inst.c, rule="dantzig")
        assert a == pytest.approx(b, abs=1e-12)


def test_degenerate_assignment():
    # permutation-matrix optima are highly degenerate for the simplex
    rng = np.random.default_rng(5)
    n = 40
    u = np.full(n, 1 / n)
    inst = validate_instance(rng.integers(0, 3, (n, n)).astype(float), u, u)
    v_star = linprog_packing_value(build_packing_instance(inst)).optimum
    assert exact_ot(inst).optimum == pytest.approx(inst.cost.max_entry - v_star, abs=1e-9)


def test_size_cap(monkeypatch):
    inst = validate_instance(np.ones((3, 3)), [1 / 3] * 3, [1 / 3] * 3)
    with pytest.raises(TooLarge):
        exact_ot(inst, max_vars=8)
    monkeypatch.setenv("OT_MAX_ORACLE_VARS", "4")
    assert max_oracle_vars() == 4
    with pytest.raises(TooLarge):
        exact_ot(inst)


def test_packing_value_examples():
    P = build_packing_instance(validate_instance([[0, 1], [1, 0]], HALF, HALF))
    assert exact_packing_value(P).optimum == pytest.approx(1.0)
    assert exact_packing_value(PackingLP([0.0, 0.0], [1.0, 3.0], matrix=np.eye(2))).optimum == 0.0
    assert exact_packing_value(PackingLP([1.0, 2.0], [0.0, 0.0], matrix=np.eye(2))).optimum == 0.0


def test_packing_value_matches_generic_lp():
    rng = np.random.default_rng(6)
    for _ in range(30):
        inst = _instance(rng, int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        if inst.cost.max_entry == 0:
            continue
        P = build_packing_instance(inst)
        fast = exact_packing_value(P)
        assert fast.optimum == pytest.approx(linprog_packing_value(P).optimum, abs=1e-9)
        assert fast.optimum == pytest.approx(inst.cost.max_entry - exact_ot(inst).optimum, abs=1e-12)


def test_packing_value_unbalanced_capacities():
    rng = np.random.default_rng(7)
    b = np.concatenate([rng.random(3), rng.random(4)])
    d = rng.random(12)
    P = PackingLP(b, d, ot_shape=(3, 4))
    assert exact_packing_value(P).optimum == pytest.approx(linprog_packing_value(P).optimum, abs=1e-9)


def test_hopcroft_karp_examples():
    assert hopcroft_karp(BipartiteGraph(2, 2, np.ones((2, 2)))).optimum == 2
    assert hopcroft_karp(BipartiteGraph(4, 3, np.zeros((4, 3)))).optimum == 0
    assert hopcroft_karp(BipartiteGraph.from_edges(2, 2, [(0, 0), (0, 1), (1, 0)])).optimum == 2
