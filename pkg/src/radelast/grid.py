"""One-dimensional mesh on the volume coordinate interval (0, 1).

All discrete formulas in the solver live on a strictly increasing node set
``rho_1 < ... < rho_M <= 1`` with no node at the coordinate singularity
``rho = 0``.  The last node carries Dirichlet data and is flagged as the
boundary node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["GridSpec", "make_grid"]

SCHEMES = ("cell_centered", "shifted_uniform")


@dataclass(frozen=True)
class GridSpec:
    """Node locations, quadrature weights and difference operators.

    ``rho`` contains every node including the boundary node at index -1.
    ``weights`` sum to one and integrate grid functions over (0, 1).
    """

    n_cells: int
    scheme: str
    rho: np.ndarray
    weights: np.ndarray
    _stencils: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.rho.size

    @property
    def boundary_index(self) -> int:
        return self.rho.size - 1

    @property
    def r13(self) -> np.ndarray:
        return self._power_nodes(1.0 / 3.0)

    @property
    def r23(self) -> np.ndarray:
        return self._power_nodes(2.0 / 3.0)

    def _power_nodes(self, s: float) -> np.ndarray:
        key = ("pow", s)
        if key not in self._stencils:
            self._stencils[key] = self.rho**s
        return self._stencils[key]

    # -- difference operators -------------------------------------------------

    def _lagrange3_weights(self, x: np.ndarray):
        """Per-node 3-point stencil (indices, coefficients) on coordinates x.

        Differentiates the local quadratic interpolant: interior nodes use
        their two neighbours, the extreme nodes use the first/last triple.
        Exact for quadratics in x.
        """
        n = x.size
        ia = np.concatenate(([0], np.arange(n - 2), [n - 3]))
        ib = ia + 1
        ic = ia + 2
        a, b, c = x[ia], x[ib], x[ic]
        xi = x
        wa = (2 * xi - b - c) / ((a - b) * (a - c))
        wb = (2 * xi - a - c) / ((b - a) * (b - c))
        wc = (2 * xi - a - b) / ((c - a) * (c - b))
        return (ia, ib, ic), (wa, wb, wc)

    def ddr(self, f: np.ndarray) -> np.ndarray:
        """d/drho of a grid function: 2nd-order 3-point stencils.

        Central at interior nodes, one-sided at the first node and at the
        boundary node; exact on affine (indeed quadratic) functions of rho.
        """
        return self.ddr_pow(f, 1.0)

    def ddr_pow(self, f: np.ndarray, s: float) -> np.ndarray:
        """d/drho computed through stencils in the coordinate x = rho**s.

        Exact on span{1, rho**s, rho**(2s)}.  Fields that behave like
        rho**(2/3) near the origin (surface coordinate, flux fields) are
        differentiated far more accurately with s = 2/3 than with s = 1,
        because they are smooth in that coordinate.
        """
        key = ("stencil", s)
        if key not in self._stencils:
            x = self.rho**s if s != 1.0 else self.rho
            (ia, ib, ic), (wa, wb, wc) = self._lagrange3_weights(x)
            chain = s * self.rho ** (s - 1.0) if s != 1.0 else None
            self._stencils[key] = (ia, ib, ic, wa, wb, wc, chain)
        ia, ib, ic, wa, wb, wc, chain = self._stencils[key]
        f = np.asarray(f, dtype=float)
        df = wa * f[ia] + wb * f[ib] + wc * f[ic]
        if chain is not None:
            df = df * chain
        return df

    # -- quadrature ------------------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        """Quadrature of a grid function over (0, 1): sum_i w_i f(rho_i)."""
        return float(np.dot(self.weights, np.asarray(f, dtype=float)))

    def cumint_from_boundary(self, f: np.ndarray) -> np.ndarray:
        """Trapezoidal cumulative integral from the boundary node down.

        Returns C with C_i = integral from rho=1 to rho_i of f, so C at the
        boundary node is zero and C is negative where f > 0.
        """
        f = np.asarray(f, dtype=float)
        seg = 0.5 * (f[:-1] + f[1:]) * np.diff(self.rho)
        out = np.zeros_like(f)
        out[:-1] = -np.cumsum(seg[::-1])[::-1]
        return out

    def interior_window(self, lo: float = 0.25) -> np.ndarray:
        """Mask of non-boundary nodes with rho >= lo, away from the origin."""
        m = self.rho >= lo
        m[self.boundary_index] = False
        return m


def make_grid(n: int, scheme: str = "cell_centered") -> GridSpec:
    """Build the mesh.

    cell_centered: nodes (i - 1/2)/n for i = 1..n plus the boundary node at
    rho = 1, midpoint quadrature weights 1/n (zero weight on the boundary
    node).  shifted_uniform: nodes i/n for i = 1..n; the last node is the
    boundary.  Neither scheme places a node at rho = 0.
    """
    if n < 4:
        raise ValueError(f"grid needs at least 4 cells, got n={n}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown grid scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == "cell_centered":
        rho = np.append((np.arange(1, n + 1) - 0.5) / n, 1.0)
        weights = np.append(np.full(n, 1.0 / n), 0.0)
    else:
        rho = np.arange(1, n + 1) / n
        weights = np.full(n, 1.0 / n)
    return GridSpec(n_cells=n, scheme=scheme, rho=rho, weights=weights)
