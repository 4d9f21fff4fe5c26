"""Polyconvex stored-energy models built from scalar convex components.

A model is the quadruple (phi, psi, g, h) of scalar functions with first
and second derivatives.  The energy of a principal-stretch triple
(v1, v2, v3) is

    Phi = phi(v1) + phi(v2) + phi(v3)
        + g(v2 v3) + g(v1 v3) + g(v1 v2) + h(v1 v2 v3),

and the reduced density used by the solver acts on the 7-vector Xi of
null-Lagrangian and lower-order quantities,

    G(Xi; rho) = phi(xi1) + psi(xi2) + psi(xi3)
               + g(xi4 / rho^{1/3}) + g(xi5 / rho^{1/3}) + g(xi6 / rho^{1/3})
               + h(xi7 / rho^{2/3}),

with psi(x) = phi(x^{1/3}).  psi is stored as an independent closed form
(cube roots of negative arguments are avoided that way); the auditor checks
the two agree on positive samples.  h is the barrier term: it must blow up
as its argument approaches zero, which is what keeps determinants positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

__all__ = [
    "DomainError",
    "ScalarC2",
    "StoredEnergyModel",
    "XiVector",
    "default_model",
    "power_model",
    "build_model",
    "eval_component",
    "eval_G",
    "grad_G",
    "stretch_energy",
    "AuditRanges",
    "AuditReport",
    "audit_assumptions",
]

ArrayLike = Union[float, np.ndarray]


class DomainError(ValueError):
    """Argument outside a component's domain (h needs a positive argument)."""


@dataclass(frozen=True)
class ScalarC2:
    """A scalar function with closed-form first and second derivatives."""

    f: Callable[[ArrayLike], ArrayLike]
    d1: Callable[[ArrayLike], ArrayLike]
    d2: Callable[[ArrayLike], ArrayLike]

    def eval(self, x: ArrayLike):
        x = np.asarray(x, dtype=float)
        return self.f(x), self.d1(x), self.d2(x)


@dataclass(frozen=True)
class StoredEnergyModel:
    """Component functions plus the growth exponents they are meant to obey.

    p, q are the growth exponents of psi and g (phi grows like x**(3p)); c1
    and c2 are the limiting ratio constants.  They parameterize the audit,
    nothing in the solver consumes them quantitatively.
    """

    name: str
    phi: ScalarC2
    psi: ScalarC2
    g: ScalarC2
    h: ScalarC2
    p: float
    q: float
    c1: float = 1.0
    c2: float = 1.0
    params: dict = field(default_factory=dict)

    def component(self, which: str) -> ScalarC2:
        try:
            return {"phi": self.phi, "psi": self.psi, "g": self.g, "h": self.h}[which]
        except KeyError:
            raise ValueError(f"unknown component {which!r}") from None


@dataclass
class XiVector:
    """The 7 null-Lagrangian/lower-order quantities at one or many nodes.

    Components: xi1 = beta rho^{2/3}; xi2 = xi3 = alpha/rho;
    xi4 = gamma/rho^{1/3}; xi5 = xi6 = (3/2) gamma' rho^{2/3};
    xi7 = alpha' rho^{2/3}.  On admissible states xi7 > 0 and xi2 >= 0.
    """

    xi1: ArrayLike
    xi2: ArrayLike
    xi3: ArrayLike
    xi4: ArrayLike
    xi5: ArrayLike
    xi6: ArrayLike
    xi7: ArrayLike

    def stack(self) -> np.ndarray:
        """(7, ...) array of the components."""
        return np.stack([np.asarray(getattr(self, f"xi{i}"), dtype=float)
                         for i in range(1, 8)])

    @classmethod
    def from_stack(cls, arr: np.ndarray) -> "XiVector":
        return cls(*arr)


# -- model instances ----------------------------------------------------------


def default_model() -> StoredEnergyModel:
    """phi = x^6, g = x^2, h = d^2 + 1/d (hence psi = x^2, p = q = 2)."""
    return StoredEnergyModel(
        name="default",
        phi=ScalarC2(lambda x: x**6, lambda x: 6 * x**5, lambda x: 30 * x**4),
        psi=ScalarC2(lambda x: x**2, lambda x: 2 * x, lambda x: 2.0 + 0 * x),
        g=ScalarC2(lambda x: x**2, lambda x: 2 * x, lambda x: 2.0 + 0 * x),
        h=ScalarC2(
            lambda d: d**2 + 1.0 / d,
            lambda d: 2 * d - d**-2,
            lambda d: 2.0 + 2 * d**-3,
        ),
        p=2.0,
        q=2.0,
    )


def power_model(
    p: float = 2.0,
    q: float = 2.0,
    c1: float = 1.0,
    c2: float = 1.0,
    h_growth: float = 2.0,
    h_coeff: float = 1.0,
    h_blowup: float = 1.0,
) -> StoredEnergyModel:
    """Power-law family: phi = c1 |x|^{3p}, g = c2 |x|^q,
    h = d^{h_growth} + h_coeff / d^{h_blowup}.

    Needs p, q >= 2 for twice-differentiable |x|-powers at the origin and
    h_coeff > 0 for the barrier to blow up at zero.
    """
    if p < 2 or q < 2:
        raise ValueError("power_model needs p >= 2 and q >= 2")
    m, a, k = float(h_growth), float(h_coeff), float(h_blowup)

    def apow(e):
        return ScalarC2(
            lambda x, e=e: np.abs(x) ** e,
            lambda x, e=e: e * np.sign(x) * np.abs(x) ** (e - 1),
            lambda x, e=e: e * (e - 1) * np.abs(x) ** (e - 2),
        )

    phi = apow(3 * p)
    psi = apow(p)
    gg = apow(q)
    return StoredEnergyModel(
        name="power",
        phi=ScalarC2(lambda x: c1 * phi.f(x), lambda x: c1 * phi.d1(x), lambda x: c1 * phi.d2(x)),
        psi=ScalarC2(lambda x: c1 * psi.f(x), lambda x: c1 * psi.d1(x), lambda x: c1 * psi.d2(x)),
        g=ScalarC2(lambda x: c2 * gg.f(x), lambda x: c2 * gg.d1(x), lambda x: c2 * gg.d2(x)),
        h=ScalarC2(
            lambda d: d**m + a * d**-k,
            lambda d: m * d ** (m - 1) - a * k * d ** (-k - 1),
            lambda d: m * (m - 1) * d ** (m - 2) + a * k * (k + 1) * d ** (-k - 2),
        ),
        p=p,
        q=q,
        c1=c1,
        c2=c2,
        params=dict(h_growth=m, h_coeff=a, h_blowup=k),
    )


def build_model(name: str, **params) -> StoredEnergyModel:
    if name == "default":
        if params:
            raise ValueError("the default model takes no parameters")
        return default_model()
    if name == "power":
        return power_model(**params)
    raise ValueError(f"unknown model {name!r}; expected 'default' or 'power'")


# -- evaluation ---------------------------------------------------------------


def eval_component(model: StoredEnergyModel, which: str, x: ArrayLike):
    """(value, d1, d2) of one component.  h rejects non-positive arguments."""
    if which == "h" and np.any(np.asarray(x) <= 0):
        raise DomainError("h is only defined for positive arguments (determinant)")
    return model.component(which).eval(x)


def _check_xi7(xi7: ArrayLike, r23: ArrayLike):
    if np.any(np.asarray(xi7) <= 0):
        raise DomainError("xi7 must be positive (alpha' rho^{2/3} > 0)")


def eval_G(model: StoredEnergyModel, xi: XiVector, rho: ArrayLike) -> ArrayLike:
    """Reduced energy density G(Xi; rho)."""
    rho = np.asarray(rho, dtype=float)
    r13 = np.cbrt(rho)
    r23 = r13 * r13
    _check_xi7(xi.xi7, r23)
    return (
        model.phi.f(np.asarray(xi.xi1, dtype=float))
        + model.psi.f(np.asarray(xi.xi2, dtype=float))
        + model.psi.f(np.asarray(xi.xi3, dtype=float))
        + model.g.f(np.asarray(xi.xi4, dtype=float) / r13)
        + model.g.f(np.asarray(xi.xi5, dtype=float) / r13)
        + model.g.f(np.asarray(xi.xi6, dtype=float) / r13)
        + model.h.f(np.asarray(xi.xi7, dtype=float) / r23)
    )


def grad_G(model: StoredEnergyModel, xi: XiVector, rho: ArrayLike) -> np.ndarray:
    """Partial derivatives of eval_G in each xi component, shape (7, ...)."""
    rho = np.asarray(rho, dtype=float)
    r13 = np.cbrt(rho)
    r23 = r13 * r13
    _check_xi7(xi.xi7, r23)
    x = xi.stack()
    return np.stack(
        [
            model.phi.d1(x[0]),
            model.psi.d1(x[1]),
            model.psi.d1(x[2]),
            model.g.d1(x[3] / r13) / r13,
            model.g.d1(x[4] / r13) / r13,
            model.g.d1(x[5] / r13) / r13,
            model.h.d1(x[6] / r23) / r23,
        ]
    )


def stretch_energy(model: StoredEnergyModel, v1: ArrayLike, v2: ArrayLike, v3: ArrayLike) -> ArrayLike:
    """Energy of a principal-stretch triple (the additive polyconvex form)."""
    phi, g, h = model.phi.f, model.g.f, model.h.f
    return (
        phi(np.asarray(v1, float)) + phi(np.asarray(v2, float)) + phi(np.asarray(v3, float))
        + g(v2 * v3) + g(v1 * v3) + g(v1 * v2) + h(v1 * v2 * v3)
    )


def stretch_force(model: StoredEnergyModel, v1: ArrayLike, v2: ArrayLike, v3: ArrayLike) -> ArrayLike:
    """d/dv1 of stretch_energy; equals the radial stress component."""
    return (
        model.phi.d1(np.asarray(v1, float))
        + model.g.d1(v1 * v3) * v3
        + model.g.d1(v1 * v2) * v2
        + model.h.d1(v1 * v2 * v3) * v2 * v3
    )


# -- assumption auditor --------------------------------------------------------


@dataclass(frozen=True)
class AuditRanges:
    """Sampling plan for the numeric assumption audit."""

    decades_down: int = 6          # barrier scan down to 10^-decades_down
    decades_up: int = 6            # growth scan up to 10^+decades_up
    points_per_decade: int = 4
    convexity_span: float = 100.0  # phi/psi/g convexity scan over [-span, span]
    convexity_points: int = 401
    blowup_factor: float = 1e3     # h(small) must exceed this times h(1)
    ratio_drift: float = 0.05      # admissible tail drift of the A3 ratios


@dataclass
class AuditEntry:
    name: str
    passed: bool
    detail: str


@dataclass
class AuditReport:
    model_name: str
    entries: list

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, name: str) -> AuditEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def __str__(self) -> str:
        lines = [f"assumption audit for model '{self.model_name}'"]
        for e in self.entries:
            lines.append(f"  [{'PASS' if e.passed else 'FAIL'}] {e.name}: {e.detail}")
        lines.append(f"  => {'ALL PASS' if self.passed else 'FAILURES PRESENT'}")
        return "\n".join(lines)


def _geometric(lo_exp: float, hi_exp: float, per_decade: int) -> np.ndarray:
    n = max(2, int(round((hi_exp - lo_exp) * per_decade)) + 1)
    return np.logspace(lo_exp, hi_exp, n)


def audit_assumptions(model: StoredEnergyModel, ranges: AuditRanges | None = None) -> AuditReport:
    """Numeric scan of the model assumptions; failures become report entries."""
    r = ranges or AuditRanges()
    entries = []

    # A1: barrier blow-up at zero and superlinear growth at infinity.
    d_small = _geometric(-r.decades_down, 0, r.points_per_decade)[::-1]  # 1 -> 1e-k
    h_small = model.h.f(d_small)
    blew_up = h_small[-1] > r.blowup_factor * max(abs(model.h.f(1.0)), 1.0)
    decreasing_part = np.any(np.diff(h_small) > 0)  # h grows as delta shrinks
    d_big = _geometric(0, r.decades_up, r.points_per_decade)
    slope = model.h.f(d_big) / d_big
    superlinear = slope[-1] > r.blowup_factor * max(abs(slope[0]), 1.0) and np.all(
        np.diff(slope[-4:]) > 0
    )
    entries.append(
        AuditEntry(
            "A1 barrier",
            bool(blew_up and decreasing_part and superlinear),
            f"h(1e-{r.decades_down})={h_small[-1]:.3g}, h(d)/d at 1e{r.decades_up}={slope[-1]:.3g}",
        )
    )

    # A2: convexity of every component on its domain.
    xs = np.linspace(-r.convexity_span, r.convexity_span, r.convexity_points)
    ok2 = True
    witness = "second derivatives nonnegative on samples"
    for name in ("phi", "psi", "g"):
        d2 = model.component(name).d2(xs)
        if np.any(d2 < 0):
            ok2 = False
            witness = f"{name}''({xs[np.argmin(d2)]:.3g}) = {d2.min():.3g} < 0"
            break
    if ok2:
        d2h = model.h.d2(d_small)
        if np.any(d2h <= 0):
            ok2 = False
            witness = f"h''({d_small[np.argmin(d2h)]:.3g}) = {d2h.min():.3g} <= 0"
    entries.append(AuditEntry("A2 convexity", bool(ok2), witness))

    # A3: power-law growth ratios stabilize at finite positive limits.
    xs_up = _geometric(1, r.decades_up, r.points_per_decade)
    ok3 = True
    details = []
    for name, expo, lim in (("phi", 3 * model.p, model.c1), ("psi", model.p, model.c1),
                            ("g", model.q, model.c2)):
        ratio = model.component(name).f(xs_up) / xs_up**expo
        tail = ratio[-4:]
        finite_pos = np.all(np.isfinite(tail)) and np.all(tail > 0)
        stable = np.ptp(tail) <= r.ratio_drift * np.abs(tail[-1])
        ok3 = ok3 and finite_pos and stable
        details.append(f"{name}/x^{expo:g} -> {ratio[-1]:.4g}")
    entries.append(AuditEntry("A3 growth", bool(ok3), ", ".join(details)))

    # A4: derivative-growth ratios bounded along the same geometric grid
    # (a limsup cannot be sampled exactly; a bounded, non-increasing tail
    # ratio is the testable surrogate).
    ok4 = True
    details = []
    for name, expo in (("phi", 3 * model.p - 1), ("psi", model.p - 1), ("g", model.q)):
        ratio = np.abs(model.component(name).d1(xs_up)) / xs_up**expo
        tail = ratio[-4:]
        bounded = np.all(np.isfinite(tail)) and tail[-1] <= 10.0 * max(ratio[0], 1e-300)
        ok4 = ok4 and bounded
        details.append(f"|{name}'|/x^{expo:g} -> {ratio[-1]:.4g}")
    entries.append(AuditEntry("A4 derivative growth", bool(ok4), ", ".join(details)))

    # psi really is phi at the cube root (cross-check of the stored closed form).
    xs_pos = _geometric(-3, 3, r.points_per_decade)
    mismatch = np.max(
        np.abs(model.psi.f(xs_pos) - model.phi.f(np.cbrt(xs_pos)))
        / np.maximum(np.abs(model.psi.f(xs_pos)), 1e-300)
    )
    entries.append(
        AuditEntry(
            "psi consistency",
            bool(mismatch < 1e-10),
            f"max relative gap psi(x) vs phi(x^(1/3)) = {mismatch:.2e}",
        )
    )

    return AuditReport(model_name=model.name, entries=entries)
