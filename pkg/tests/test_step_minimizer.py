import numpy as np
import pytest

import oracles
from conftest import observed_orders, perturbed_state, random_feasible_velocity
from radelast import (
    InfeasibleStartError,
    MaxIterationsError,
    State,
    assemble_I,
    el_residual,
    entropy_defect,
    init_state,
    is_admissible,
    lift_constraints,
    make_grid,
    min_alpha_prime,
    minimize_step,
    scheme_energy,
)

TAU = 1e-3


# -- constraint lift -------------------------------------------------------------


def test_lift_zero_velocity_is_identity(model):
    grid = make_grid(16)
    st = perturbed_state(grid)
    alpha, beta, gamma = lift_constraints(grid, st, TAU, np.zeros_like(grid.rho))
    assert np.array_equal(alpha, st.alpha)
    assert np.array_equal(beta, st.beta)
    assert np.array_equal(gamma, st.gamma)


def test_lift_preserves_boundary_value(model):
    grid = make_grid(16)
    st = perturbed_state(grid, stretch=1.2)
    rng = np.random.default_rng(0)
    v = random_feasible_velocity(grid, st, TAU, rng)
    alpha, _, _ = lift_constraints(grid, st, TAU, v)
    assert alpha[-1] == st.alpha[-1]


def test_lift_is_affine(model):
    grid = make_grid(16)
    st = perturbed_state(grid)
    rng = np.random.default_rng(1)
    v1 = random_feasible_velocity(grid, st, TAU, rng)
    v2 = random_feasible_velocity(grid, st, TAU, rng)
    sum_lift = lift_constraints(grid, st, TAU, v1 + v2)
    l1 = lift_constraints(grid, st, TAU, v1)
    l2 = lift_constraints(grid, st, TAU, v2)
    l0 = lift_constraints(grid, st, TAU, np.zeros_like(v1))
    for s, a, b, z in zip(sum_lift, l1, l2, l0):
        assert np.allclose(s, a + b - z, rtol=1e-13, atol=1e-15)


# -- assembled objective -----------------------------------------------------------


def test_value_at_zero_is_initial_energy(model):
    grid = make_grid(32)
    st = perturbed_state(grid)
    out = assemble_I(model, grid, st, TAU, np.zeros_like(grid.rho))
    assert out.value == pytest.approx(scheme_energy(model, grid, st), rel=1e-14)


def test_infeasible_velocity_gives_inf(model):
    grid = make_grid(16)
    st = perturbed_state(grid)
    v = np.zeros_like(grid.rho)
    v[3] = -1e6  # collapses a cell difference
    out = assemble_I(model, grid, st, TAU, v)
    assert out.value == np.inf and out.grad is None and out.hess_banded is None


def test_gradient_matches_finite_differences(model):
    grid = make_grid(16)
    st = perturbed_state(grid)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(5):
        v = random_feasible_velocity(grid, st, TAU, rng)
        out = assemble_I(model, grid, st, TAU, v)
        fd = oracles.fd_gradient(lambda u: assemble_I(model, grid, st, TAU, u).value, v)
        worst = max(worst, np.max(np.abs(fd - out.grad)) / max(np.max(np.abs(out.grad)), 1e-12))
    assert worst <= 1e-6


def test_hessian_is_positive_semidefinite(model):
    grid = make_grid(16)
    st = perturbed_state(grid)
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = random_feasible_velocity(grid, st, TAU, rng)
        out = assemble_I(model, grid, st, TAU, v)
        diag, off = out.hess_banded[1], out.hess_banded[0, 1:]
        n = diag.size
        dense = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        for _ in range(20):
            x = rng.standard_normal(n)
            assert x @ dense @ x >= 0.0


def test_hessian_matches_fd_of_gradient(model):
    grid = make_grid(12)
    st = perturbed_state(grid)
    rng = np.random.default_rng(4)
    v = random_feasible_velocity(grid, st, TAU, rng)
    out = assemble_I(model, grid, st, TAU, v)
    n = grid.rho.size - 1
    dense = np.diag(out.hess_banded[1]) + np.diag(out.hess_banded[0, 1:], 1) \
        + np.diag(out.hess_banded[0, 1:], -1)
    h = 1e-6
    fd = np.zeros((n, n))
    for k in range(n):
        e = np.zeros_like(v)
        e[k] = h
        gp = assemble_I(model, grid, st, TAU, v + e).grad
        gm = assemble_I(model, grid, st, TAU, v - e).grad
        fd[:, k] = (gp - gm) / (2 * h)
    assert np.max(np.abs(fd - dense)) / np.max(np.abs(dense)) <= 1e-6
    # coupling beyond nearest neighbours would betray a broken band structure
    off_band = fd - np.tril(np.triu(fd, -1), 1)
    assert np.max(np.abs(off_band)) <= 1e-8 * np.max(np.abs(dense))


# -- the minimization --------------------------------------------------------------


def test_uniform_stretch_is_fixed_point(model):
    for lam in (0.8, 1.0, 2.0):
        grid = make_grid(64)
        st = init_state("homogeneous", lam, grid)
        res = minimize_step(model, grid, st, TAU)
        assert np.max(np.abs(res.state.v)) <= 1e-10
        assert res.iterations == 0
        assert np.array_equal(res.state.alpha, st.alpha)


def test_minimizer_beats_rest_candidate(model):
    grid = make_grid(32)
    st = perturbed_state(grid)
    res = minimize_step(model, grid, st, TAU)
    rest = assemble_I(model, grid, st, TAU, np.zeros_like(grid.rho)).value
    assert res.value <= rest
    assert res.energy_after <= res.energy_before


def test_matches_dense_gradient_descent_oracle(model):
    grid = make_grid(8)
    st = perturbed_state(grid)
    res = minimize_step(model, grid, st, TAU, tol=1e-13)
    fun = lambda v: assemble_I(model, grid, st, TAU, v).value
    v_gd, _, gn = oracles.gradient_descent_minimize(fun, grid.rho.size, grad_tol=1e-10)
    assert gn <= 1e-10
    assert np.max(np.abs(res.state.v - v_gd)) <= 1e-7


def test_minimizer_unique_from_different_starts(model):
    grid = make_grid(16)
    st = perturbed_state(grid)
    rng = np.random.default_rng(42)
    res_a = minimize_step(model, grid, st, TAU, tol=1e-12)
    v0 = random_feasible_velocity(grid, st, TAU, rng, scale=0.01)
    res_b = minimize_step(model, grid, st, TAU, v_init=v0, tol=1e-12)
    assert np.max(np.abs(res_a.state.v - res_b.state.v)) <= 1e-8


def test_feasibility_of_result(model):
    grid = make_grid(32)
    st = perturbed_state(grid, stretch=0.9)
    res = minimize_step(model, grid, st, TAU)
    assert min_alpha_prime(grid, res.state.alpha) > 0
    assert is_admissible(model, grid, res.state, 0.9**3)


def test_infeasible_start_rejected(model):
    grid = make_grid(16)
    st = perturbed_state(grid)
    bad = State(st.alpha[::-1].copy(), st.beta, st.gamma, st.v)  # decreasing alpha
    with pytest.raises(InfeasibleStartError):
        minimize_step(model, grid, bad, TAU)
    v_bad = np.zeros_like(grid.rho)
    v_bad[-1] = 1.0  # boundary node must stay pinned
    with pytest.raises(InfeasibleStartError):
        minimize_step(model, grid, st, TAU, v_init=v_bad)


def test_max_iterations_carries_best_iterate(model):
    grid = make_grid(16)
    st = perturbed_state(grid)
    with pytest.raises(MaxIterationsError) as err:
        minimize_step(model, grid, st, TAU, max_iterations=1)
    best = err.value.best
    assert best.iterations == 1
    assert np.isfinite(best.value)
    assert min_alpha_prime(grid, best.state.alpha) > 0


# -- force-balance identity ----------------------------------------------------------


def test_el_residual_vanishes_at_equilibrium(model):
    grid = make_grid(32)
    st = init_state("homogeneous", 1.3, grid)
    res = minimize_step(model, grid, st, TAU)
    defect, const = el_residual(model, grid, st, TAU, res)
    assert np.max(np.abs(defect)) <= 1e-10
    # both sides are constant there; the fitted constant is the flux level
    assert np.isfinite(const)


def test_el_residual_refines(model):
    maxima = []
    for n in (32, 64):
        grid = make_grid(n)
        st = perturbed_state(grid)
        res = minimize_step(model, grid, st, TAU, tol=1e-12)
        defect, _ = el_residual(model, grid, st, TAU, res)
        maxima.append(np.max(np.abs(defect[grid.interior_window()])))
    assert observed_orders(maxima)[0] >= 1.5


def test_el_residual_larger_when_unconverged(model):
    grid = make_grid(32)
    st = perturbed_state(grid)
    res = minimize_step(model, grid, st, TAU, tol=1e-12)
    with pytest.raises(MaxIterationsError) as err:
        minimize_step(model, grid, st, TAU, max_iterations=1)
    rough = err.value.best
    win = grid.interior_window()
    d_conv, _ = el_residual(model, grid, st, TAU, res)
    d_rough, _ = el_residual(model, grid, st, TAU, rough)
    assert np.max(np.abs(d_rough[win])) > np.max(np.abs(d_conv[win]))


# -- entropy inequality ---------------------------------------------------------------


def test_entropy_defect_zero_at_equilibrium(model):
    grid = make_grid(32)
    st = init_state("homogeneous", 1.0, grid)
    res = minimize_step(model, grid, st, TAU)
    assert np.max(np.abs(entropy_defect(model, grid, st, TAU, res))) == 0.0


def test_entropy_defect_nonpositive_up_to_truncation(model):
    grid = make_grid(64)
    st = perturbed_state(grid)
    res = minimize_step(model, grid, st, TAU, tol=1e-12)
    defect = entropy_defect(model, grid, st, TAU, res)
    # interior violation is pure discretization error; measure against the
    # magnitude of the genuine dissipation present in the same field
    assert defect[:-1].max() <= 1e-2 * np.abs(defect[:-1]).max() + 1e-8


def test_entropy_defect_integrates_nonpositive(model):
    grid = make_grid(64)
    st = perturbed_state(grid)
    res = minimize_step(model, grid, st, TAU, tol=1e-12)
    defect = entropy_defect(model, grid, st, TAU, res)
    # boundary flux vanishes (v = 0 at rho = 1, flux ~ rho^{2/3} at 0), so
    # the integral must be nonpositive up to quadrature error
    assert grid.integrate(defect) <= 1e-8


# -- regularity relations ---------------------------------------------------------------


def test_lifted_fields_satisfy_derivative_relations(model):
    # after a converged step the lifted beta and gamma' are algebraically
    # slaved to alpha':
    #   beta rho^{2/3}          = alpha' (rho/alpha0)^{2/3} + f1
    #   (3/2) gamma' rho^{1/3}  = alpha' (rho/alpha0)^{1/3} + f2
    # with f1, f2 built from the previous state; discrete derivatives obey
    # them to truncation error
    residuals = []
    for n in (32, 64):
        grid = make_grid(n)
        st = perturbed_state(grid)
        res = minimize_step(model, grid, st, TAU, tol=1e-12)
        rho, r13, r23 = grid.rho, grid.r13, grid.r23
        a0, ap0 = st.alpha, grid.ddr(st.alpha)
        gp0 = grid.ddr_pow(st.gamma, 2.0 / 3.0)
        new = res.state
        ap = grid.ddr(new.alpha)
        gp = grid.ddr_pow(new.gamma, 2.0 / 3.0)
        f1 = st.beta * r23 - ap0 * r23 / (3 * a0 ** (2 / 3.0)) * (1 + 2 * new.alpha / a0)
        f2 = 1.5 * gp0 * r13 - ap0 * r13 / (3 * np.cbrt(a0)) * (2 + new.alpha / a0)
        r_beta = new.beta * r23 - (ap * (rho / a0) ** (2 / 3.0) + f1)
        r_gamma = 1.5 * gp * r13 - (ap * (rho / a0) ** (1 / 3.0) + f2)
        win = grid.interior_window()
        residuals.append(max(np.max(np.abs(r_beta[win])), np.max(np.abs(r_gamma[win]))))
    assert residuals[0] <= 1e-5
    assert observed_orders(residuals)[0] >= 1.5
