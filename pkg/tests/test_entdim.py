import numpy as np
import pytest

from ncmoment import conic, corrlab
from ncmoment.entdim import (
    Correlation,
    CorrelationError,
    EntdimConfig,
    InfeasibleCorrelationError,
    Scenario,
    build_entdim_sets,
    build_xi_problem,
    monotonicity_audit,
    xi_q,
)

CHSH = Scenario(2, 2, 2, 2)


def test_scenario_validation():
    with pytest.raises(CorrelationError):
        Scenario(0, 2, 2, 2)


def test_correlation_validation_negative():
    t = np.full((2, 2, 2, 2), 0.25)
    t[0, 0, 0, 0] = -1e-3
    t[1, 1, 0, 0] = 0.25 + 1e-3
    with pytest.raises(CorrelationError, match="negative"):
        Correlation(CHSH, t)


def test_correlation_validation_normalization():
    t = np.full((2, 2, 2, 2), 0.3)
    with pytest.raises(CorrelationError, match="sum"):
        Correlation(CHSH, t)


def test_correlation_clamps_tiny_negatives():
    t = np.full((2, 2, 2, 2), 0.25)
    t[0, 0, 0, 0] = -1e-14
    t[1, 1, 0, 0] = 0.5 + 1e-14
    P = Correlation(CHSH, t)
    assert P.table.min() >= 0.0


def test_correlation_json_roundtrip():
    P = corrlab.random_classical(CHSH, 3, seed=9)
    Q = Correlation.from_json(P.to_json())
    assert np.abs(P.table - Q.table).max() < 1e-15


def test_build_sets_counts_chsh():
    sets = build_entdim_sets(CHSH, 1)
    assert len(sets.generators) == 9  # 4 + 4 measurement symbols and z
    # state idempotence + per-question sums + cross-party commutators
    assert len(sets.ideal) == 1 + 2 + 2 + 16
    assert len(sets.sum_rules) == 4


def test_problem_shape_level_two():
    P = corrlab.random_classical(CHSH, 3, seed=2)
    prob = build_xi_problem(P, 2)
    sizes = [b.size for b in prob.blocks]
    assert sizes[0] == 74  # 1 + 9 symbols + 64 reduced degree-2 words
    assert sizes[1:] == [10] * 9  # localizing blocks over degree <= 1 words
    assert prob.num_vars == 776


def test_level_one_data_constraints_dropped():
    P = corrlab.random_classical(CHSH, 3, seed=2)
    prob = build_xi_problem(P, 1)
    assert prob.metadata["data_constraints_dropped"] == 16


def test_xi_q_level_one_trivial():
    for seed in (0, 1):
        real = corrlab.random_realization(CHSH, d=2, seed=seed)
        res = xi_q(corrlab.realize(real), 1)
        assert abs(res.value - 1.0) < 1e-5


def test_xi_q_level_two_classical_table():
    P = corrlab.random_classical(CHSH, 4, seed=3)
    res = xi_q(P, 2)
    assert abs(res.value - 1.0) < 1e-4


def test_xi_q_level_two_deterministic_table():
    P = corrlab.deterministic_correlation(CHSH, (0, 1), (1, 0))
    res = xi_q(P, 2)
    assert abs(res.value - 1.0) < 1e-5


def test_relabeling_invariance():
    P = corrlab.realize(corrlab.random_realization(CHSH, d=2, seed=4))
    v1 = xi_q(P, 2).value
    v2 = xi_q(P.permuted(pa=[1, 0], ps=[1, 0]), 2).value
    assert abs(v1 - v2) < 1e-6


def test_monotonicity_audit_classical():
    P = corrlab.random_classical(CHSH, 3, seed=5)
    values = monotonicity_audit(P, 2)
    assert len(values) == 2
    assert values[1] >= values[0] - 1e-6
    assert abs(values[0] - 1.0) < 1e-5


def test_level_cap_enforced():
    P = corrlab.random_classical(CHSH, 3, seed=6)
    with pytest.raises(ValueError, match="cap"):
        xi_q(P, 4)


def test_basis_cap_enforced():
    from ncmoment.ncwords import BasisSizeError

    P = corrlab.random_classical(CHSH, 3, seed=6)
    with pytest.raises(BasisSizeError):
        build_xi_problem(P, 2, EntdimConfig(basis_cap=50))


def test_infeasibility_surfaced_with_margin():
    # an objective cap below the floor L(1) >= 1 makes the system infeasible;
    # the failure must carry the feasibility margin rather than pass silently
    P = corrlab.random_classical(CHSH, 3, seed=7)
    with pytest.raises(InfeasibleCorrelationError) as exc:
        xi_q(P, 1, EntdimConfig(objective_cap=0.5))
    assert "level-1" in str(exc.value)


def test_upper_bound_from_realization():
    # the solved bound never exceeds the dimension of a generating realization
    for seed in (0, 1):
        real = corrlab.random_realization(CHSH, d=2, seed=seed)
        P = corrlab.realize(real)
        res = xi_q(P, 2)
        assert res.value <= real.d ** 2 + 1e-4


def test_flatness_attached_with_entdim_delta():
    P = corrlab.random_classical(CHSH, 3, seed=8)
    res = xi_q(P, 2)
    assert res.flatness.entdim_delta == 2  # ceil(2/3) + 1
    assert res.flatness.r == 2
