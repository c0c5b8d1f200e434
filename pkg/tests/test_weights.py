import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripledd.weights import (
    PANEL_CELLS,
    RC_CELLS,
    alpha_gdt,
    cell4_index,
    cell8_index,
    check_cell_probs,
    omega_gdt,
    phi0,
    product_probs8,
    rho0,
    w_gd,
)

UNIFORM4 = np.full(4, 0.25)
UNIFORM8 = np.full(8, 0.125)


def random_simplex(rng, arity, size):
    draws = rng.gamma(1.0, 1.0, size=(size, arity)) + 1e-3
    return draws / draws.sum(axis=1, keepdims=True)


def test_rho0_uniform_treated():
    assert rho0(UNIFORM4, 1, 1) == pytest.approx(4.0, abs=1e-12)


def test_rho0_uniform_sign_flip():
    assert rho0(UNIFORM4, 0, 1) == pytest.approx(-4.0, abs=1e-12)


def test_rho0_asymmetric():
    p = np.empty(4)
    p[cell4_index(0, 0)] = 0.4
    p[cell4_index(0, 1)] = 0.3
    p[cell4_index(1, 0)] = 0.2
    p[cell4_index(1, 1)] = 0.1
    assert rho0(p, 1, 0) == pytest.approx(-5.0, abs=1e-12)


def test_phi0_uniform_values():
    assert phi0(UNIFORM8, 1, 1, 1) == pytest.approx(8.0, abs=1e-12)
    assert phi0(UNIFORM8, 0, 1, 1) == pytest.approx(-8.0, abs=1e-12)
    assert phi0(UNIFORM8, 0, 0, 0) == pytest.approx(-8.0, abs=1e-12)


def test_phi0_matches_sum_form():
    rng = np.random.default_rng(5)
    p = random_simplex(rng, 8, 1)[0]
    for G, D, T in RC_CELLS:
        total = -sum(
            (1 - g - G) * (1 - d - D) * (1 - t - T) / p[cell8_index(g, d, t)]
            for g, d, t in RC_CELLS
        )
        assert phi0(p, G, D, T) == pytest.approx(total, rel=1e-12)


def test_w_gd_treated_target_identity():
    rng = np.random.default_rng(0)
    for p in random_simplex(rng, 4, 50):
        for G, D in PANEL_CELLS:
            assert w_gd((1, 1), p, G, D) == 0.0


def test_w_gd_examples():
    p = np.empty(4)
    p[cell4_index(0, 0)] = 0.3
    p[cell4_index(0, 1)] = 0.4
    p[cell4_index(1, 0)] = 0.1
    p[cell4_index(1, 1)] = 0.2
    assert w_gd((0, 1), p, 0, 1) == pytest.approx(-0.5, abs=1e-12)
    assert w_gd((0, 1), p, 1, 1) == pytest.approx(1.0, abs=1e-12)


def test_omega_treated_target_identity():
    rng = np.random.default_rng(1)
    for p in random_simplex(rng, 8, 50):
        for G, D, T in RC_CELLS:
            assert omega_gdt((1, 1, 1), p, G, D, T) == 0.0


def test_omega_examples():
    assert omega_gdt((0, 0, 0), UNIFORM8, 0, 0, 0) == pytest.approx(-1.0, abs=1e-12)
    assert omega_gdt((1, 1, 0), UNIFORM8, 1, 1, 1) == pytest.approx(1.0, abs=1e-12)


def test_alpha_examples():
    assert alpha_gdt((1, 1, 1), UNIFORM4, 0.5, 1, 1, 1) == pytest.approx(-1.0, abs=1e-12)
    assert alpha_gdt((0, 1, 0), UNIFORM4, 0.5, 1, 1, 1) == pytest.approx(1.0, abs=1e-12)
    p = np.empty(4)
    p[cell4_index(0, 0)] = 0.3
    p[cell4_index(0, 1)] = 0.4
    p[cell4_index(1, 0)] = 0.1
    p[cell4_index(1, 1)] = 0.2
    assert alpha_gdt((0, 1, 1), p, 0.5, 0, 1, 1) == pytest.approx(-1.0, abs=1e-12)


def test_sign_laws_over_simplex_draws():
    rng = np.random.default_rng(42)
    for p in random_simplex(rng, 4, 200):
        for G, D in PANEL_CELLS:
            assert np.sign(rho0(p, G, D)) == (-1.0) ** (G + D)
    for p in random_simplex(rng, 8, 200):
        for G, D, T in RC_CELLS:
            assert np.sign(phi0(p, G, D, T)) == (-1.0) ** (G + D + T + 1)


@given(
    st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=4, max_size=4),
    st.floats(min_value=0.05, max_value=0.95),
    st.sampled_from(PANEL_CELLS),
    st.sampled_from([0, 1]),
)
@settings(max_examples=200, deadline=None)
def test_factorization_carries_period_term(raw, p_t1, gd, T):
    """Product 8-cell probabilities reduce the 8-cell weight to the
    period term times the 4-cell weight, exactly."""
    p4 = np.asarray(raw) / np.sum(raw)
    p8 = product_probs8(p4, p_t1)
    check_cell_probs(p8, 8)
    G, D = gd
    factor = (T - p_t1) / (p_t1 * (1.0 - p_t1))
    assert phi0(p8, G, D, T) == pytest.approx(factor * rho0(p4, G, D), rel=1e-12)


def test_empirical_weight_nullity_brute_force():
    """With saturated empirical propensities the sample mean of every
    w_gd is exactly zero: per stratum, n_11 - p11_hat * n = 0."""
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(40, 120))
        strata = rng.integers(0, 3, size=n)
        cells = np.empty(n, dtype=int)
        # every (stratum, cell) pair non-empty
        while True:
            cells = rng.integers(0, 4, size=n)
            counts = {(s, c) for s, c in zip(strata, cells)}
            if len(counts) == 12:
                break
        # empirical per-stratum cell probabilities
        probs = np.empty((n, 4))
        for s in range(3):
            mask = strata == s
            freq = np.bincount(cells[mask], minlength=4) / mask.sum()
            probs[mask] = freq
        for target in PANEL_CELLS:
            vals = [
                w_gd(target, probs[i], cells[i] // 2, cells[i] % 2)
                for i in range(n)
            ]
            assert np.mean(vals) == pytest.approx(0.0, abs=1e-13)


def test_check_cell_probs_rejects_bad_inputs():
    with pytest.raises(ValueError):
        check_cell_probs(np.array([0.5, 0.5, 0.0, 0.0]), 4)
    with pytest.raises(ValueError):
        check_cell_probs(np.array([0.5, 0.3, 0.1, 0.2]), 4)
    with pytest.raises(ValueError):
        check_cell_probs(np.full(8, 0.125), 4)
