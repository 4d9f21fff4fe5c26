"""Kinematic maps between the radius frame and the volume frame.

The volume coordinate is rho = R^3 and the volume amplitude is
alpha = w^3, where w(R) is the radial deformation amplitude.  In these
variables the principal stretches become

    Gamma = (alpha' (rho/alpha)^{2/3}, (alpha/rho)^{1/3}, (alpha/rho)^{1/3}),

the product v1 v2 v3 equals alpha' exactly, and positivity of the
determinant is the single condition alpha' > 0.

Omega lifts a stretch triple to the 7 null-Lagrangian/lower-order
quantities; its first-column partials drive both the discrete momentum
flux and the transport identities checked here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .grid import GridSpec
from .stored_energy import XiVector

__all__ = [
    "GammaTriple",
    "gamma_from_alpha",
    "xi_assemble",
    "xi_on_grid",
    "omega_map",
    "omega_jacobian",
    "to_rho_frame",
    "from_rho_frame",
    "null_lagrangian_residual",
    "NULL_LAGRANGIAN_INDICES",
]

ArrayLike = Union[float, np.ndarray]

NULL_LAGRANGIAN_INDICES = (1, 5, 6, 7)


@dataclass
class GammaTriple:
    """Principal stretches; radial symmetry forces v2 = v3."""

    v1: ArrayLike
    v2: ArrayLike
    v3: ArrayLike

    def det(self) -> ArrayLike:
        return self.v1 * self.v2 * self.v3


def gamma_from_alpha(alpha: ArrayLike, alpha_prime: ArrayLike, rho: ArrayLike) -> GammaTriple:
    """Stretch triple of the volume-frame fields; v1 v2 v3 == alpha_prime."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("gamma_from_alpha needs alpha > 0")
    rho = np.asarray(rho, dtype=float)
    lateral = np.cbrt(alpha / rho)
    v1 = np.asarray(alpha_prime, dtype=float) * (rho / alpha) ** (2.0 / 3.0)
    return GammaTriple(v1=v1, v2=lateral, v3=lateral.copy())


def xi_assemble(
    alpha: ArrayLike,
    beta: ArrayLike,
    gamma: ArrayLike,
    alpha_prime: ArrayLike,
    gamma_prime: ArrayLike,
    rho: ArrayLike,
) -> XiVector:
    """The 7-vector (beta rho^{2/3}, alpha/rho, alpha/rho, gamma/rho^{1/3},
    (3/2) gamma' rho^{2/3}, (3/2) gamma' rho^{2/3}, alpha' rho^{2/3})."""
    rho = np.asarray(rho, dtype=float)
    r13 = np.cbrt(rho)
    r23 = r13 * r13
    lower = np.asarray(alpha, dtype=float) / rho
    surf = 1.5 * np.asarray(gamma_prime, dtype=float) * r23
    return XiVector(
        xi1=np.asarray(beta, dtype=float) * r23,
        xi2=lower,
        xi3=lower.copy() if isinstance(lower, np.ndarray) else lower,
        xi4=np.asarray(gamma, dtype=float) / r13,
        xi5=surf,
        xi6=surf.copy() if isinstance(surf, np.ndarray) else surf,
        xi7=np.asarray(alpha_prime, dtype=float) * r23,
    )


def xi_on_grid(grid: GridSpec, alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> XiVector:
    """Nodal Xi with discrete derivatives.

    alpha is differentiated in rho (it is affine there for uniform
    deformations); gamma behaves like rho^{2/3} near the origin, so its
    derivative is formed in that coordinate, which keeps the innermost
    nodes accurate.
    """
    return xi_assemble(
        alpha, beta, gamma, grid.ddr(alpha), grid.ddr_pow(gamma, 2.0 / 3.0), grid.rho
    )


def omega_map(gamma: GammaTriple, rho: ArrayLike) -> np.ndarray:
    """Omega(V; rho) = (v1, v2^3, v3^3, v2 v3 rho^{1/3}, v1 v3 rho^{1/3},
    v1 v2 rho^{1/3}, v1 v2 v3 rho^{2/3}); shape (7, ...)."""
    rho = np.asarray(rho, dtype=float)
    r13 = np.cbrt(rho)
    r23 = r13 * r13
    v1, v2, v3 = (np.asarray(v, dtype=float) for v in (gamma.v1, gamma.v2, gamma.v3))
    return np.stack(
        [v1, v2**3, v3**3, v2 * v3 * r13, v1 * v3 * r13, v1 * v2 * r13, v1 * v2 * v3 * r23]
    )


def omega_jacobian(gamma: GammaTriple, rho: ArrayLike) -> np.ndarray:
    """Partials Omega^i_{,j}, shape (7, 3, ...).

    Rows 2-4 have a zero first column (those components do not involve v1),
    which is what decouples the lower-order transport from the momentum
    flux.
    """
    rho = np.asarray(rho, dtype=float)
    r13 = np.cbrt(rho)
    r23 = r13 * r13
    v1, v2, v3 = (np.asarray(v, dtype=float) for v in (gamma.v1, gamma.v2, gamma.v3))
    z = np.zeros(np.broadcast(v1, rho).shape)
    one = np.ones_like(z)
    rows = [
        [one, z, z],
        [z, 3 * v2**2 + z, z],
        [z, z, 3 * v3**2 + z],
        [z, v3 * r13 + z, v2 * r13 + z],
        [v3 * r13 + z, z, v1 * r13 + z],
        [v2 * r13 + z, v1 * r13 + z, z],
        [v2 * v3 * r23 + z, v1 * v3 * r23 + z, v1 * v2 * r23 + z],
    ]
    return np.stack([np.stack(r) for r in rows])


def to_rho_frame(grid: GridSpec, w: np.ndarray):
    """Map amplitude samples w(R_i) at R_i = rho_i^{1/3} to (alpha, gamma).

    Rejects profiles that are negative or not strictly increasing, since
    those cannot satisfy alpha' > 0.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != grid.rho.shape:
        raise ValueError("w must be sampled at every grid node")
    if np.any(w < 0):
        raise ValueError("amplitude must be nonnegative")
    if np.any(np.diff(w) <= 0):
        raise ValueError("amplitude must be strictly increasing (alpha' > 0)")
    return w**3, w**2


def from_rho_frame(alpha: np.ndarray) -> np.ndarray:
    """Inverse of to_rho_frame: w = alpha^{1/3}."""
    return np.cbrt(np.asarray(alpha, dtype=float))


def null_lagrangian_residual(grid: GridSpec, alpha: np.ndarray, index: int) -> np.ndarray:
    """Discrete residual of -3 rho^{2/3} d/drho(Omega^i_{,1}(Gamma))
    + rho^{-1/3} (Omega^i_{,2} + Omega^i_{,3})(Gamma) for i in {1, 5, 6, 7}.

    Analytically zero for every profile.  The derivative is taken in the
    radius coordinate (3 rho^{2/3} d/drho = d/dR), where the first-column
    fields are polynomial for linear alpha, so uniform stretches come out
    zero to round-off.
    """
    if index not in NULL_LAGRANGIAN_INDICES:
        raise ValueError(f"index must be one of {NULL_LAGRANGIAN_INDICES}")
    alpha = np.asarray(alpha, dtype=float)
    gam = gamma_from_alpha(alpha, grid.ddr(alpha), grid.rho)
    jac = omega_jacobian(gam, grid.rho)
    i = index - 1
    col1 = jac[i, 0]
    col23 = jac[i, 1] + jac[i, 2]
    # 3 rho^{2/3} * ddr_pow(f, 1/3) is exactly the derivative in R = rho^{1/3}
    return -3.0 * grid.r23 * grid.ddr_pow(col1, 1.0 / 3.0) + col23 / grid.r13
