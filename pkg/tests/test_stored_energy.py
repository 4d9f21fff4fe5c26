import numpy as np
import pytest

from radelast import (
    DomainError,
    ScalarC2,
    StoredEnergyModel,
    XiVector,
    audit_assumptions,
    build_model,
    default_model,
    eval_G,
    eval_component,
    grad_G,
    power_model,
    stretch_energy,
)
from radelast.kinematics import xi_assemble


def ones_xi():
    return XiVector(*([1.0] * 7))


def random_admissible_xi(rng, n=None):
    shape = () if n is None else (n,)
    vals = [rng.uniform(0.1, 2.0, shape) for _ in range(7)]
    return XiVector(*vals)


# -- component evaluation -------------------------------------------------------


def test_eval_component_phi_at_one(model):
    assert eval_component(model, "phi", 1.0) == pytest.approx((1.0, 6.0, 30.0))


def test_eval_component_h_at_one(model):
    # h(d) = d^2 + 1/d, h' = 2d - d^-2, h'' = 2 + 2 d^-3
    assert eval_component(model, "h", 1.0) == pytest.approx((2.0, 1.0, 4.0))


def test_barrier_dominates_small_arguments(model):
    value, _, _ = eval_component(model, "h", 1e-3)
    assert value >= 1e3


def test_h_rejects_nonpositive(model):
    with pytest.raises(DomainError):
        eval_component(model, "h", 0.0)
    with pytest.raises(DomainError):
        eval_component(model, "h", -0.5)


def test_unknown_component(model):
    with pytest.raises(ValueError):
        eval_component(model, "zeta", 1.0)


# -- reduced energy -------------------------------------------------------------


def test_eval_G_identity_values(model):
    # phi(1) + 2 psi(1) + 3 g(1) + h(1) = 1 + 2 + 3 + 2
    assert eval_G(model, ones_xi(), 1.0) == pytest.approx(8.0, abs=1e-14)


def test_eval_G_homogeneous_is_rho_independent(model):
    rho = np.linspace(0.01, 1.0, 37)
    # uniform state alpha = rho with exact closed-form derivatives
    xi = xi_assemble(rho, rho ** (-2.0 / 3.0), rho ** (2.0 / 3.0),
                     np.ones_like(rho), (2.0 / 3.0) * rho ** (-1.0 / 3.0), rho)
    g = eval_G(model, xi, rho)
    assert np.max(np.abs(g - 8.0)) <= 1e-12


def test_eval_G_rejects_nonpositive_xi7(model):
    xi = ones_xi()
    xi.xi7 = -1.0
    with pytest.raises(DomainError):
        eval_G(model, xi, 1.0)


def test_eval_G_matches_stretch_energy_composition(model):
    # Xi assembled from the stretch triple must reproduce the additive
    # polyconvex energy of the stretches themselves.
    rng = np.random.default_rng(7)
    from radelast.kinematics import GammaTriple, omega_map

    for _ in range(200):
        v1, v2 = rng.uniform(0.3, 2.5, 2)
        v3 = v2  # radial symmetry
        rho = rng.uniform(0.05, 1.0)
        xi = XiVector(*omega_map(GammaTriple(v1, v2, v3), rho))
        lhs = eval_G(model, xi, rho)
        rhs = stretch_energy(model, v1, v2, v3)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_eval_G_explicit_form(model):
    # assembled through xi_assemble the density must equal
    # phi(beta rho^{2/3}) + 2 psi(alpha/rho) + g(gamma/rho^{2/3})
    # + 2 g(3 gamma' rho^{1/3} / 2) + h(alpha')
    rng = np.random.default_rng(11)
    for _ in range(100):
        rho = rng.uniform(0.05, 1.0)
        alpha, beta, gamma = rng.uniform(0.2, 2.0, 3)
        alpha_p, gamma_p = rng.uniform(0.2, 2.0, 2)
        xi = xi_assemble(alpha, beta, gamma, alpha_p, gamma_p, rho)
        val = eval_G(model, xi, rho)
        explicit = (
            model.phi.f(beta * rho ** (2 / 3.0))
            + 2 * model.psi.f(alpha / rho)
            + model.g.f(gamma / rho ** (2 / 3.0))
            + 2 * model.g.f(1.5 * gamma_p * rho ** (1 / 3.0))
            + model.h.f(alpha_p)
        )
        assert val == pytest.approx(explicit, rel=5e-15, abs=1e-14)


def test_grad_G_barrier_component(model):
    g = grad_G(model, ones_xi(), 1.0)
    assert g[6] == pytest.approx(1.0)  # h'(1) = 1


def test_grad_G_symmetric_components(model):
    rng = np.random.default_rng(3)
    xi = random_admissible_xi(rng)
    xi.xi3 = xi.xi2
    xi.xi6 = xi.xi5
    g = grad_G(model, xi, 0.7)
    assert g[1] == g[2]
    assert g[4] == g[5]


def test_grad_G_matches_finite_differences(model):
    rng = np.random.default_rng(5)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        rho = rng.uniform(0.05, 1.0)
        xi = random_admissible_xi(rng)
        grad = grad_G(model, xi, rho)
        scale = max(np.max(np.abs(grad)), 1.0)
        for i in range(7):
            base = xi.stack()
            up, dn = base.copy(), base.copy()
            up[i] += h
            dn[i] -= h
            fd = (eval_G(model, XiVector.from_stack(up), rho)
                  - eval_G(model, XiVector.from_stack(dn), rho)) / (2 * h)
            worst = max(worst, abs(fd - grad[i]) / scale)
    assert worst <= 1e-6


def test_convexity_of_G(model):
    # midpoint convexity at 1000 random pairs; the defect may only be
    # negative at round-off level
    rng = np.random.default_rng(17)
    worst = np.inf
    for _ in range(1000):
        rho = rng.uniform(0.05, 1.0)
        a = random_admissible_xi(rng).stack()
        b = random_admissible_xi(rng).stack()
        ga = eval_G(model, XiVector.from_stack(a), rho)
        gb = eval_G(model, XiVector.from_stack(b), rho)
        for t in (0.25, 0.5, 0.75):
            gm = eval_G(model, XiVector.from_stack(t * a + (1 - t) * b), rho)
            worst = min(worst, t * ga + (1 - t) * gb - gm)
    assert worst >= -1e-12


# -- auditor ---------------------------------------------------------------------


def test_default_model_passes_audit(model):
    report = audit_assumptions(model)
    assert report.passed, str(report)


def test_power_models_pass_audit():
    for p, q in ((2.0, 2.0), (3.0, 2.5)):
        report = audit_assumptions(power_model(p=p, q=q))
        assert report.passed, str(report)


def test_missing_barrier_fails_a1():
    # h(d) = d^2 stays bounded at zero: no barrier, no blow-up
    base = default_model()
    bad = StoredEnergyModel(
        name="no-barrier",
        phi=base.phi, psi=base.psi, g=base.g,
        h=ScalarC2(lambda d: d**2, lambda d: 2 * d, lambda d: 2.0 + 0 * d),
        p=2.0, q=2.0,
    )
    report = audit_assumptions(bad)
    assert not report.entry("A1 barrier").passed
    assert not report.passed


def test_odd_power_fails_a2():
    # phi(x) = x^3 is concave for x < 0
    base = default_model()
    bad = StoredEnergyModel(
        name="odd-power",
        phi=ScalarC2(lambda x: x**3, lambda x: 3 * x**2, lambda x: 6 * x),
        psi=ScalarC2(lambda x: x, lambda x: 1.0 + 0 * x, lambda x: 0 * x),
        g=base.g, h=base.h, p=1.0, q=2.0,
    )
    report = audit_assumptions(bad)
    assert not report.entry("A2 convexity").passed


def test_audit_report_is_printable(model):
    text = str(audit_assumptions(model))
    assert "A1 barrier" in text and "ALL PASS" in text


def test_build_model_registry():
    assert build_model("default").name == "default"
    assert build_model("power", p=2.5).p == 2.5
    with pytest.raises(ValueError):
        build_model("rubber")
    with pytest.raises(ValueError):
        build_model("default", p=3.0)
