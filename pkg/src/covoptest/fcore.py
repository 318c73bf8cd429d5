"""Hilbert-space numerics on a discretization grid.

Curves are stored as their values on a common grid and integrals are
replaced by quadrature sums, so that ``<u, v> = sum_m w_m u(t_m) v(t_m)``.
An integral operator with kernel ``K`` acts as
``(K u)(t_m) = sum_l w_l K[l, m] u(t_l)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOL_SYM = 1e-10
TOL_PSD = 1e-8
EIGEN_CUTOFF = 1e-12


class GridMismatchError(ValueError):
    """Raised when objects defined on different grids are combined."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def trapezoid_weights(points):
    """Trapezoid quadrature weights for strictly increasing abscissas."""
    t = np.asarray(points, dtype=float)
    dt = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Abscissas ``t_1 < ... < t_p`` with nonnegative quadrature weights.

    Parameters
    ----------
    points : array-like of shape (p,)
        Strictly increasing evaluation points, ``p >= 2``.
    weights : array-like of shape (p,), optional
        Quadrature weights. Trapezoid weights are used when omitted.
    """

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        t = np.asarray(self.points, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a grid needs at least 2 points")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise ValueError("grid points must be finite and strictly increasing")
        w = trapezoid_weights(t) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != t.shape:
            raise ValueError(f"expected {t.size} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be finite, nonnegative and not all zero")
        object.__setattr__(self, "points", _frozen(t))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, start=0.0, stop=1.0, size=101):
        return cls(np.linspace(start, stop, size))

    @property
    def size(self):
        return self.points.size

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.points.tobytes(), self.weights.tobytes()))

    def check_curve(self, u, name="curve"):
        u = np.asarray(u, dtype=float)
        if u.shape[-1:] != (self.size,):
            raise GridMismatchError(
                f"{name} has {u.shape[-1] if u.ndim else 0} values, grid has {self.size} points"
            )
        return u


def same_grid(*grids):
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError("objects live on different grids")
    return first


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """``n`` curves evaluated on a common grid.

    ``values[j, m]`` holds ``X_j(t_m)``.
    """

    grid: Grid
    values: np.ndarray
    label: object = None

    def __post_init__(self):
        x = np.asarray(self.values, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise ValueError("values must be a 2-D array of shape (n_curves, n_points)")
        if x.shape[0] < 1:
            raise ValueError("a sample needs at least one curve")
        self.grid.check_curve(x, "sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "values", _frozen(x))

    @property
    def n(self):
        return self.values.shape[0]

    def __len__(self):
        return self.values.shape[0]

    def with_values(self, values):
        return FunctionalSample(self.grid, values, self.label)


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Integral operator on a grid, given by its kernel matrix ``K[m, l]``."""

    grid: Grid
    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        p = self.grid.size
        if k.shape != (p, p):
            raise GridMismatchError(f"kernel shape {k.shape} does not match grid size {p}")
        object.__setattr__(self, "kernel", _frozen(k))

    def __sub__(self, other):
        same_grid(self.grid, other.grid)
        return KernelOperator(self.grid, self.kernel - other.kernel)

    def __add__(self, other):
        same_grid(self.grid, other.grid)
        return KernelOperator(self.grid, self.kernel + other.kernel)

    def __mul__(self, c):
        return KernelOperator(self.grid, c * self.kernel)

    __rmul__ = __mul__

    def trace(self):
        return float(np.dot(self.grid.weights, np.diag(self.kernel)))


class CovarianceOperator(KernelOperator):
    """Symmetric kernel operator, the discretized ``Gamma`` of a population."""

    def __post_init__(self):
        super().__post_init__()
        k = self.kernel
        scale = max(np.max(np.abs(k)), np.finfo(float).tiny)
        if np.max(np.abs(k - k.T)) > TOL_SYM * scale:
            raise ValueError("covariance kernel is not symmetric")

    def __add__(self, other):
        out = super().__add__(other)
        if isinstance(other, CovarianceOperator):
            return CovarianceOperator(out.grid, out.kernel)
        return out

    def __mul__(self, c):
        return CovarianceOperator(self.grid, c * self.kernel)

    __rmul__ = __mul__

    def weighted_matrix(self):
        """``W^{1/2} K W^{1/2}``, which shares the operator's spectrum."""
        sw = np.sqrt(self.grid.weights)
        return sw[:, None] * self.kernel * sw[None, :]

    def is_psd(self, tol=TOL_PSD):
        ev = np.linalg.eigvalsh(self.weighted_matrix())
        top = max(ev[-1], 0.0)
        return bool(ev[0] >= -tol * top)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Nonincreasing eigenvalues and w-orthonormal eigenfunctions.

    ``eigenfunctions`` has shape ``(q, p)``: one curve per row.
    ``clipped_mass`` is the total magnitude of negative eigenvalues that were
    set to zero, and ``dropped_mass`` the sum of retained-sign eigenvalues that
    fell under the cutoff.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    grid: Grid
    trace: float = 0.0
    clipped_mass: float = 0.0
    dropped_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        phi = np.asarray(self.eigenfunctions, dtype=float).reshape(-1, self.grid.size)
        object.__setattr__(self, "eigenfunctions", _frozen(phi))

    def __len__(self):
        return self.eigenvalues.size

    def truncate(self, q):
        return EigenSystem(
            self.eigenvalues[:q],
            self.eigenfunctions[:q],
            self.grid,
            self.trace,
            self.clipped_mass,
            self.dropped_mass + float(self.eigenvalues[q:].sum()),
        )

    def reconstruct(self):
        phi = self.eigenfunctions
        return CovarianceOperator(self.grid, (phi.T * self.eigenvalues) @ phi)


def inner_product(u, v, grid):
    """Quadrature approximation of ``int u(t) v(t) dt``."""
    u = grid.check_curve(u, "u")
    v = grid.check_curve(v, "v")
    return float(np.dot(grid.weights, u * v))


def norm(u, grid):
    return float(np.sqrt(max(inner_product(u, u, grid), 0.0)))


def apply_operator(op, u):
    """Evaluate ``(Gamma u)(t_m) = sum_l w_l K[l, m] u(t_l)``."""
    u = op.grid.check_curve(u, "u")
    return (op.grid.weights * u) @ op.kernel


def tensor_op(u, v, grid):
    """Kernel of ``u (x) v``, the operator ``w -> <v, w> u``."""
    u = grid.check_curve(u, "u")
    v = grid.check_curve(v, "v")
    # (u (x) v) w (t_m) = sum_l w_l K[l, m] w(t_l) must equal u(t_m) <v, w>,
    # so K[l, m] = v(t_l) u(t_m).
    return KernelOperator(grid, np.outer(v, u))


def hs_inner(a, b):
    """Hilbert-Schmidt inner product ``trace(A* B)`` in quadrature form."""
    grid = same_grid(a.grid, b.grid)
    w = grid.weights
    return float(w @ (a.kernel * b.kernel) @ w)


def hs_norm(a):
    return float(np.sqrt(max(hs_inner(a, a), 0.0)))


def _orient(phi, weights):
    """Flip signs so the integral (or first clearly nonzero value) is positive."""
    for row in phi:
        integral = np.dot(weights, row)
        scale = np.dot(weights, np.abs(row))
        if abs(integral) > 1e-8 * scale:
            sign = np.sign(integral)
        else:
            big = np.flatnonzero(np.abs(row) > 1e-6 * np.max(np.abs(row)))
            sign = np.sign(row[big[0]]) if big.size else 1.0
        if sign < 0:
            row *= -1.0
    return phi


def eigen_decompose(op, cutoff=EIGEN_CUTOFF):
    """Spectral decomposition of a symmetric kernel operator.

    Solves the symmetric problem for ``W^{1/2} K W^{1/2}`` and maps the
    eigenvectors back with ``W^{-1/2}``. Negative eigenvalues are clipped to
    zero and eigenvalues ``<= cutoff * lambda_max`` are dropped.

    Parameters
    ----------
    op : CovarianceOperator
    cutoff : float, default=1e-12
        Relative threshold below which eigenpairs are discarded.

    Returns
    -------
    EigenSystem
    """
    if cutoff < 0:
        raise ValueError("cutoff must be nonnegative")
    w = op.grid.weights
    if np.any(w <= 0):
        raise ValueError("eigen_decompose needs strictly positive quadrature weights")
    kernel = 0.5 * (op.kernel + op.kernel.T)
    sw = np.sqrt(w)
    vals, vecs = np.linalg.eigh(sw[:, None] * kernel * sw[None, :])
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    clipped = float(-vals[vals < 0].sum())
    vals = np.clip(vals, 0.0, None)
    top = vals[0] if vals.size else 0.0
    keep = vals > cutoff * top if top > 0 else np.zeros(vals.shape, dtype=bool)
    phi = (vecs[:, keep] / sw[:, None]).T.copy()
    _orient(phi, w)
    return EigenSystem(
        vals[keep],
        phi,
        op.grid,
        trace=float(np.dot(w, np.diag(kernel))),
        clipped_mass=clipped,
        dropped_mass=float(vals[~keep].sum()),
    )


def orthonormalize(curves, grid):
    """Gram-Schmidt (via Cholesky) in the w-weighted inner product."""
    f = np.atleast_2d(grid.check_curve(curves))
    gram = (f * grid.weights) @ f.T
    chol = np.linalg.cholesky(gram)
    return np.linalg.solve(chol, f)
