"""One implicit time step as a convex minimization in the velocity field.

Given the previous iterate (alpha0, beta0, gamma0, v0), the step minimizes

    I(v) = integral of  1/2 (v - v0)^2 + G(Xi(v); rho)

where (alpha, beta, gamma) are eliminated through the affine update laws

    beta  = beta0  + 3 tau v',
    alpha = alpha0 + 3 tau alpha0^{2/3} v,
    gamma = gamma0 + 2 tau alpha0^{1/3} v,

so the decision variable is v alone, with v = 0 at the boundary node.  The
barrier component h blows up as the volume derivative approaches zero, so a
plain backtracking line search keeps every iterate interior; no inequality
machinery is needed.

Discretization.  Derivative-carrying energy terms (the beta term, the
surface-gradient term and the barrier) live on the cells between nodes as
exact difference quotients; pointwise terms live on nodes.  An extra stub
cell covers (0, rho_1] with the fields extended by the uniform-deformation
profile through the origin.  The node weights of the pointwise terms are
chosen so the discrete force balance telescopes exactly against the cell
fluxes.  Consequences, all exact in floating point up to round-off:

* uniform stretch states are stationary points (the assembled gradient
  vanishes identically there), and
* the per-step energy never increases (the chain rule below holds with the
  same quadrature on both sides, so convexity gives dissipation exactly).

The resulting Hessian in v is symmetric positive definite and tridiagonal
(cell differences couple nearest neighbours only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import solveh_banded

from .grid import GridSpec
from .kinematics import gamma_from_alpha, omega_jacobian, xi_on_grid
from .stored_energy import StoredEnergyModel, eval_G, grad_G

__all__ = [
    "State",
    "StepResult",
    "InfeasibleStartError",
    "MaxIterationsError",
    "lift_constraints",
    "assemble_I",
    "minimize_step",
    "el_residual",
    "entropy_defect",
    "min_alpha_prime",
    "scheme_energy",
    "is_admissible",
]

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
DEFAULT_TOL = 1e-10


class InfeasibleStartError(RuntimeError):
    """The starting state or velocity violates the positivity constraint."""


class MaxIterationsError(RuntimeError):
    """Newton did not reach the gradient tolerance; carries the best iterate."""

    def __init__(self, message: str, best: "StepResult"):
        super().__init__(message)
        self.best = best


@dataclass
class State:
    """Grid functions at one time level.

    alpha is the volume amplitude (w^3), beta its normalized derivative
    (alpha'/alpha^{2/3} on consistent data), gamma the surface amplitude
    (alpha^{2/3} on consistent data), v the velocity of alpha^{1/3}.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    v: np.ndarray

    def copy(self) -> "State":
        return State(self.alpha.copy(), self.beta.copy(), self.gamma.copy(), self.v.copy())


@dataclass
class StepResult:
    """Accepted minimizer of one step."""

    state: State
    iterations: int
    grad_norm: float
    value: float
    energy_before: float   # step functional at v = 0 (energy of the data)
    energy_after: float    # same quadrature evaluated at the minimizer


class Assembled(NamedTuple):
    value: float
    grad: Optional[np.ndarray]          # over the free nodes (boundary dropped)
    hess_banded: Optional[np.ndarray]   # (2, n_free) upper storage for solveh_banded


# -- geometry ------------------------------------------------------------------


class _Geometry:
    """Cell/stub geometry and the telescoping node weights for one grid."""

    def __init__(self, grid: GridSpec):
        rho = grid.rho
        r13, r23 = grid.r13, grid.r23
        self.rho, self.r13, self.r23 = rho, r13, r23
        self.stub = rho[0]
        self.dr = np.diff(rho)
        self.dT = np.diff(r23)
        self.P = ((rho[:-1] + rho[1:]) / 2.0) ** (2.0 / 3.0)
        self.rr = self.dr / self.dT
        m = rho.size
        wv = np.empty(m)
        wv[0] = rho[0] + self.dr[0] / 2
        wv[1:-1] = (rho[2:] - rho[:-2]) / 2
        wv[-1] = self.dr[-1] / 2
        self.Wv = wv
        wpsi = np.zeros(m)
        wpsi[0] = 1.5 * r13[0] * self.P[0] - rho[0]
        wpsi[1:-1] = 1.5 * r13[1:-1] * np.diff(self.P)
        wpsi[-1] = (1.0 - rho[0]) - wpsi[:-1].sum()
        self.Wpsi = wpsi
        wg = np.zeros(m)
        wg[0] = 2 * r23[0] * self.rr[0] - 3 * rho[0]
        wg[1:-1] = 2 * r23[1:-1] * np.diff(self.rr)
        wg[-1] = (1.0 - rho[0]) - wg[:-1].sum()
        self.Wg = wg


def _geometry(grid: GridSpec) -> _Geometry:
    key = "scheme_geometry"
    if key not in grid._stencils:
        grid._stencils[key] = _Geometry(grid)
    return grid._stencils[key]


def min_alpha_prime(grid: GridSpec, alpha: np.ndarray) -> float:
    """Smallest discrete volume derivative: stub slope and cell differences."""
    geo = _geometry(grid)
    return float(min(alpha[0] / geo.stub, np.min(np.diff(alpha) / geo.dr)))


# -- step assembler ------------------------------------------------------------


class _StepAssembler:
    """Value/gradient/Hessian of the step functional for one (state0, tau)."""

    def __init__(self, model: StoredEnergyModel, grid: GridSpec, state0: State, tau: float):
        self.model = model
        self.grid = grid
        self.geo = _geometry(grid)
        self.state0 = state0
        self.tau = float(tau)
        a23 = state0.alpha ** (2.0 / 3.0)
        a13 = np.cbrt(state0.alpha)
        self.da = 3.0 * self.tau * a23          # d alpha / d v (per node)
        self.dg = 2.0 * self.tau * a13          # d gamma / d v (per node)
        bx0 = state0.beta * self.geo.r23
        self.bx0 = bx0
        self.xbase = 0.5 * (bx0[:-1] + bx0[1:])  # cell part of the beta term

    # lifted pointwise fields
    def lift(self, v: np.ndarray):
        s0 = self.state0
        return s0.alpha + self.da * v, s0.gamma + self.dg * v

    def cell_args(self, v: np.ndarray, alpha: np.ndarray, gamma: np.ndarray):
        geo = self.geo
        x = self.xbase + 3.0 * self.tau * geo.P * np.diff(v) / geo.dr
        a = np.diff(gamma) / geo.dT
        b = np.diff(alpha) / geo.dr
        return x, a, b

    def feasible(self, alpha: np.ndarray) -> bool:
        return alpha[0] > 0 and bool(np.all(np.diff(alpha) > 0))

    def _g_sum(self, v, alpha, gamma) -> float:
        """Stored-energy part of the functional (no kinetic term)."""
        m, geo = self.model, self.geo
        x, a, b = self.cell_args(v, alpha, gamma)
        rho, r13, r23 = geo.rho, geo.r13, geo.r23
        s_psi = alpha[0] / rho[0]
        s_g = gamma[0] / r23[0]
        total = np.dot(geo.Wpsi, 2 * m.psi.f(alpha / rho))
        total += np.dot(geo.Wg, m.g.f(gamma / r23))
        total += np.dot(geo.dr, m.phi.f(x) + 2 * m.g.f(a) + m.h.f(b))
        total += geo.stub * (m.phi.f(self.bx0[0]) + 2 * m.psi.f(s_psi)
                             + 3 * m.g.f(s_g) + m.h.f(s_psi))
        return float(total)

    def value(self, v: np.ndarray) -> float:
        alpha, gamma = self.lift(v)
        if not self.feasible(alpha):
            return np.inf
        geo = self.geo
        val = 0.5 * np.dot(geo.Wv, (v - self.state0.v) ** 2) + self._g_sum(v, alpha, gamma)
        return val if np.isfinite(val) else np.inf

    def energy(self, v: np.ndarray) -> float:
        """Same quadrature with kinetic term 1/2 v^2 instead of the increment."""
        alpha, gamma = self.lift(v)
        return 0.5 * np.dot(self.geo.Wv, v**2) + self._g_sum(v, alpha, gamma)

    def grad_hess(self, v: np.ndarray):
        """Exact gradient and tridiagonal Hessian over the free nodes."""
        m, geo, tau = self.model, self.geo, self.tau
        alpha, gamma = self.lift(v)
        x, a, b = self.cell_args(v, alpha, gamma)
        rho, r13, r23 = geo.rho, geo.r13, geo.r23
        da, dg = self.da, self.dg

        xi2 = alpha / rho
        xi4 = gamma / r23
        gr = geo.Wv * (v - self.state0.v)
        gr += geo.Wpsi * 2 * m.psi.d1(xi2) * da / rho
        gr += geo.Wg * m.g.d1(xi4) * dg / r23
        # cell fluxes: +left cell, -right cell at each node
        f_x = m.phi.d1(x) * 3 * tau * geo.P
        f_a = 2 * m.g.d1(a) * 2 * tau * geo.rr      # dr * (1/dT) = rr
        f_b = m.h.d1(b) * 3 * tau                   # dr * (a23/dr): a23 applied per node
        a23 = da / (3 * tau)
        a13 = dg / (2 * tau)
        gr[1:] += f_x + f_a * a13[1:] + f_b * a23[1:]
        gr[:-1] -= f_x + f_a * a13[:-1] + f_b * a23[:-1]
        # stub contributions at the innermost node
        s_psi = alpha[0] / rho[0]
        s_g = gamma[0] / r23[0]
        gr[0] += (2 * m.psi.d1(s_psi) * da[0] + 3 * m.g.d1(s_g) * dg[0] * r13[0]
                  + m.h.d1(s_psi) * da[0])

        # curvature pieces (cells weighted by their length)
        c_x = m.phi.d2(x) * (3 * tau * geo.P) ** 2 / geo.dr
        c_a = 2 * m.g.d2(a) * (2 * tau) ** 2 / geo.dT**2 * geo.dr
        c_b = m.h.d2(b) * (3 * tau) ** 2 / geo.dr
        diag = geo.Wv + geo.Wpsi * 2 * m.psi.d2(xi2) * (da / rho) ** 2 \
            + geo.Wg * m.g.d2(xi4) * (dg / r23) ** 2
        diag[1:] += c_x + c_a * a13[1:] ** 2 + c_b * a23[1:] ** 2
        diag[:-1] += c_x + c_a * a13[:-1] ** 2 + c_b * a23[:-1] ** 2
        diag[0] += geo.stub * (2 * m.psi.d2(s_psi) * (da[0] / rho[0]) ** 2
                               + 3 * m.g.d2(s_g) * (dg[0] / r23[0]) ** 2
                               + m.h.d2(s_psi) * (da[0] / rho[0]) ** 2)
        off = -(c_x + c_a * a13[:-1] * a13[1:] + c_b * a23[:-1] * a23[1:])
        return gr[:-1], diag[:-1], off[:-1]


# -- public operations ---------------------------------------------------------


def lift_constraints(grid: GridSpec, state0: State, tau: float, v: np.ndarray):
    """Affine update of (alpha, beta, gamma) generated by a velocity field."""
    a23 = state0.alpha ** (2.0 / 3.0)
    a13 = np.cbrt(state0.alpha)
    alpha = state0.alpha + 3.0 * tau * a23 * v
    beta = state0.beta + 3.0 * tau * grid.ddr(v)
    gamma = state0.gamma + 2.0 * tau * a13 * v
    return alpha, beta, gamma


def assemble_I(model: StoredEnergyModel, grid: GridSpec, state0: State, tau: float,
               v: np.ndarray) -> Assembled:
    """Value, exact gradient and banded Hessian of the step functional.

    The gradient/Hessian are the exact derivatives of the returned value as
    a function of the free velocity entries.  The Hessian is returned in
    symmetric banded storage (2 rows: superdiagonal, diagonal); it is
    tridiagonal because every derivative in the functional is a two-point
    cell difference.  Infeasible v (a nonpositive cell difference of the
    lifted alpha) yields value = +inf and no derivatives.
    """
    asm = _StepAssembler(model, grid, state0, tau)
    val = asm.value(v)
    if not np.isfinite(val):
        return Assembled(np.inf, None, None)
    gr, diag, off = asm.grad_hess(v)
    ab = np.zeros((2, gr.size))
    ab[0, 1:] = off
    ab[1] = diag
    return Assembled(val, gr, ab)


def _solve_banded_spd(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Banded Cholesky solve with a diagonal-shift retry on indefiniteness.

    The Hessian is positive semidefinite analytically; a nonpositive pivot
    can only come from round-off, so a tiny relative shift restores it.
    """
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    shift = 0.0
    scale = np.max(diag)
    for _ in range(8):
        ab[1] = diag + shift
        try:
            return solveh_banded(ab, rhs)
        except np.linalg.LinAlgError:
            shift = max(shift * 100.0, 1e-14 * scale)
    raise np.linalg.LinAlgError("banded Hessian factorization failed despite shifts")


def minimize_step(
    model: StoredEnergyModel,
    grid: GridSpec,
    state0: State,
    tau: float,
    v_init: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    max_iterations: int = 200,
) -> StepResult:
    """Newton iteration with backtracking line search on the step functional.

    Terminates when the max-norm of the assembled gradient drops below
    tol * (1 + |I|).  Backtracking halves the step until the lifted alpha
    keeps every cell difference positive (the barrier makes the functional
    infinite outside, so the Armijo test rejects infeasible trials
    automatically) and the Armijo decrease holds.
    """
    asm = _StepAssembler(model, grid, state0, tau)
    if not asm.feasible(state0.alpha):
        raise InfeasibleStartError("previous state violates alpha' > 0")
    v = np.zeros_like(state0.v) if v_init is None else np.array(v_init, dtype=float)
    if v[-1] != 0.0:
        raise InfeasibleStartError("v must vanish at the boundary node")
    f_val = asm.value(v)
    if not np.isfinite(f_val):
        raise InfeasibleStartError("initial velocity leaves the feasible set")
    energy_before = asm.value(np.zeros_like(v))
    tol_eff = tol * (1.0 + abs(f_val))

    iters = 0
    while True:
        gr, diag, off = asm.grad_hess(v)
        grad_norm = float(np.max(np.abs(gr)))
        if grad_norm <= tol_eff:
            break
        if iters >= max_iterations:
            best = _finish(grid, asm, state0, tau, v, iters, grad_norm, f_val, energy_before)
            raise MaxIterationsError(
                f"no convergence in {max_iterations} Newton iterations "
                f"(gradient norm {grad_norm:.3e})", best)
        dv = _solve_banded_spd(diag, off, -gr)
        slope = float(np.dot(gr, dv))
        if slope >= 0:  # round-off near the solution; fall back to steepest descent
            dv = -gr
            slope = -float(np.dot(gr, gr))
        step = np.append(dv, 0.0)
        s = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            trial = v + s * step
            f_trial = asm.value(trial)
            if f_trial <= f_val + ARMIJO_C * s * slope:
                accepted = True
                break
            s *= BACKTRACK
        if not accepted:
            best = _finish(grid, asm, state0, tau, v, iters, grad_norm, f_val, energy_before)
            raise MaxIterationsError(
                f"line search stalled at gradient norm {grad_norm:.3e}", best)
        v = trial
        f_val = f_trial
        iters += 1
        # feasibility of accepted iterates is an invariant, not a hope
        assert asm.feasible(asm.lift(v)[0]), "accepted iterate lost feasibility"

    return _finish(grid, asm, state0, tau, v, iters, grad_norm, f_val, energy_before)


def _finish(grid, asm, state0, tau, v, iters, grad_norm, f_val, energy_before) -> StepResult:
    alpha, beta, gamma = lift_constraints(grid, state0, tau, v)
    new_state = State(alpha=alpha, beta=beta, gamma=gamma, v=v.copy())
    return StepResult(
        state=new_state,
        iterations=iters,
        grad_norm=grad_norm,
        value=f_val,
        energy_before=energy_before,
        energy_after=asm.energy(v),
    )


def scheme_energy(model: StoredEnergyModel, grid: GridSpec, state: State) -> float:
    """Total energy 1/2 v^2 + G of a state under the solver quadrature.

    Exact (all component measures integrate constants exactly), so a
    uniform stretch with the default model and unit stretch gives 8.
    """
    asm = _StepAssembler(model, grid, state, 0.0)
    return asm.energy(state.v)


def is_admissible(model: StoredEnergyModel, grid: GridSpec, state: State,
                  boundary_alpha: float, rtol: float = 1e-9) -> bool:
    """Membership test: boundary data, positivity, and finite energy."""
    a = state.alpha
    ok = (
        abs(a[-1] - boundary_alpha) <= rtol * max(1.0, abs(boundary_alpha))
        and state.v[-1] == 0.0
        and bool(np.all(a >= 0))
        and min_alpha_prime(grid, a) > 0
    )
    return ok and np.isfinite(scheme_energy(model, grid, state))


# -- per-step verification fields ------------------------------------------------


def el_residual(model: StoredEnergyModel, grid: GridSpec, state0: State, tau: float,
                result: StepResult):
    """Pointwise defect of the integrated force-balance identity.

    At the minimizer,  3 rho^{2/3} G1(rho)  should equal the cumulative
    integral from the boundary of  s^{-1/3} G2(s) + (v - v0)/tau  plus a
    single constant, where G1 (resp. G2) contracts grad_G at the new state
    with the first (resp. lateral) stretch-partials of Omega at the old
    state.  The constant is fitted by quadrature-weighted least squares and
    returned together with the defect field.
    """
    st = result.state
    rho = grid.rho
    ap0 = grid.ddr(state0.alpha)
    jac0 = omega_jacobian(gamma_from_alpha(state0.alpha, ap0, rho), rho)
    xi = xi_on_grid(grid, st.alpha, st.beta, st.gamma)
    gg = grad_G(model, xi, rho)
    g1 = np.einsum("in,in->n", gg, jac0[:, 0])
    g2 = np.einsum("in,in->n", gg, jac0[:, 1] + jac0[:, 2])
    lhs = 3.0 * grid.r23 * g1
    cum = grid.cumint_from_boundary(g2 / grid.r13 + (st.v - state0.v) / tau)
    raw = lhs - cum
    wsum = grid.weights.sum()
    const = float(np.dot(grid.weights, raw) / wsum)
    return raw - const, const


def entropy_defect(model: StoredEnergyModel, grid: GridSpec, state0: State, tau: float,
                   result: StepResult) -> np.ndarray:
    """Discrete entropy-inequality field; nonpositive up to truncation error.

    Evaluates (eta - eta0)/tau - d/drho [3 rho^{2/3} G1 v] with eta the
    nodal energy density 1/2 v^2 + G(Xi).  The flux behaves like rho^{2/3}
    near the origin, so its divergence is formed in that coordinate.
    """
    st = result.state
    rho = grid.rho
    xi0 = xi_on_grid(grid, state0.alpha, state0.beta, state0.gamma)
    xi1 = xi_on_grid(grid, st.alpha, st.beta, st.gamma)
    eta0 = 0.5 * state0.v**2 + eval_G(model, xi0, rho)
    eta1 = 0.5 * st.v**2 + eval_G(model, xi1, rho)
    jac0 = omega_jacobian(gamma_from_alpha(state0.alpha, grid.ddr(state0.alpha), rho), rho)
    g1 = np.einsum("in,in->n", grad_G(model, xi1, rho), jac0[:, 0])
    flux = 3.0 * grid.r23 * g1 * st.v
    return (eta1 - eta0) / tau - grid.ddr_pow(flux, 2.0 / 3.0)
