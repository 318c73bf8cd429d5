"""Fourth-moment operators on a truncated tensor basis.

For a basis ``phi_1..phi_q`` the HS operators ``phi_a (x) phi_b`` form an
orthonormal system indexed by ordered pairs ``(a, b)``; pair ``(a, b)`` sits at
flat position ``a * q + b``. An operator acting on HS operators is then a
``q^2 x q^2`` matrix ``M[(a, b), (c, d)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fcore import CovarianceOperator, EigenSystem, _frozen, eigen_decompose, same_grid
from .estim import sample_cov


@dataclass(frozen=True, eq=False)
class HSBasis:
    """Leading eigenfunctions of a reference covariance, with tensor indexing."""

    eigensystem: EigenSystem
    retained_fraction: float = 1.0

    @property
    def q(self):
        return len(self.eigensystem)

    @property
    def grid(self):
        return self.eigensystem.grid

    @property
    def functions(self):
        return self.eigensystem.eigenfunctions

    @property
    def pairs(self):
        q = self.q
        return [(a, b) for a in range(q) for b in range(q)]

    def tensor_coords(self, kernel):
        """Coordinates ``<K, phi_a (x) phi_b>_F`` of a symmetric kernel, flattened."""
        pw = self.functions * self.grid.weights
        return (pw @ np.asarray(kernel) @ pw.T).ravel()


def select_q(eigenvalues, n, q=None, var_frac=0.99):
    """Truncation level for the tensor basis.

    With ``q`` given, it is used as is (capped at the rank). Otherwise the
    smallest ``q`` whose eigenvalues capture ``var_frac`` of the trace, capped
    at ``floor(n ** (1/3))`` and at the rank.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    rank = lam.size
    if rank == 0:
        raise ValueError("pooled covariance operator is zero")
    if q is not None:
        if int(q) < 1:
            raise ValueError("q must be at least 1")
        return min(int(q), rank)
    if not 0 < var_frac <= 1:
        raise ValueError("var_frac must lie in (0, 1]")
    frac = np.cumsum(lam) / lam.sum()
    q_var = int(np.searchsorted(frac, var_frac - 1e-12) + 1)
    cap = max(1, int(np.floor(n ** (1.0 / 3.0) + 1e-9)))
    return max(1, min(q_var, cap, rank))


def sample_taus(samples):
    sizes = np.array([s.n for s in samples], dtype=float)
    return sizes / sizes.sum()


def pooled_cov(samples):
    taus = sample_taus(samples)
    covs = [sample_cov(s) for s in samples]
    k = sum(t * c.kernel for t, c in zip(taus, covs))
    return CovarianceOperator(covs[0].grid, k)


def pooled_basis(samples, q=None, var_frac=0.99):
    """Eigenbasis of ``sum_i tau_i Gamma_i`` truncated by :func:`select_q`."""
    if len(samples) < 2:
        raise ValueError("pooled_basis needs at least 2 samples")
    same_grid(*(s.grid for s in samples))
    eig = eigen_decompose(pooled_cov(samples))
    if len(eig) == 0:
        raise ValueError("pooled covariance operator is zero")
    n = sum(s.n for s in samples)
    qq = select_q(eig.eigenvalues, n, q, var_frac)
    total = eig.eigenvalues.sum() + eig.dropped_mass
    frac = float(eig.eigenvalues[:qq].sum() / total) if total > 0 else 1.0
    return HSBasis(eig.truncate(qq), frac)


def project_scores(s, basis):
    """Scores ``c[j, a] = <X_j - Xbar, phi_a>``."""
    same_grid(s.grid, basis.grid)
    xc = s.values - s.values.mean(axis=0)
    return (xc * basis.grid.weights) @ basis.functions.T


@dataclass(frozen=True, eq=False)
class FourthMomentOperator:
    """Symmetric ``q^2 x q^2`` matrix of an operator on HS operators."""

    basis: HSBasis
    matrix: np.ndarray
    n: int = 0
    tau: float = None
    clipped_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        d = self.basis.q ** 2
        if m.shape != (d, d):
            raise ValueError(f"matrix must be {d}x{d}, got {m.shape}")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def q(self):
        return self.basis.q


def _symmetrize(m, q):
    """Average over transpose and both index swaps ``(a,b) <-> (b,a)``."""
    m = 0.5 * (m + m.T)
    t = m.reshape(q, q, q, q)
    t = 0.25 * (t + t.transpose(1, 0, 2, 3) + t.transpose(0, 1, 3, 2) + t.transpose(1, 0, 3, 2))
    return t.reshape(q * q, q * q)


def gaussian_upsilon_matrix(cov):
    """``M[(a,b),(c,d)] = C_ac C_bd + C_ad C_bc``, i.e. ``(I + Swap)(C (x) C)``."""
    c = np.asarray(cov, dtype=float)
    q = c.shape[0]
    kron = np.einsum("ac,bd->abcd", c, c)
    return (kron + kron.transpose(0, 1, 3, 2)).reshape(q * q, q * q)


def empirical_upsilon_matrix(scores):
    """Plug-in ``(1/n) sum_j y_j y_j^T - vec(C) vec(C)^T`` with ``y_j = vec(c_j c_j^T)``."""
    c = np.asarray(scores, dtype=float)
    n, q = c.shape
    y = (c[:, :, None] * c[:, None, :]).reshape(n, q * q)
    vc = y.mean(axis=0)
    m = y.T @ y / n - np.outer(vc, vc)
    return _symmetrize(m, q)


def psd_repair(m, tol=1e-8):
    """Clip negative eigenvalues; returns the repaired matrix and the clipped mass."""
    vals, vecs = np.linalg.eigh(m)
    neg = vals < 0
    if not neg.any():
        return m, 0.0
    clipped = float(-vals[neg].sum())
    vals = np.where(neg, 0.0, vals)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T), clipped


def estimate_upsilon(s, basis, mode="empirical", repair=True):
    """Estimate the asymptotic covariance of ``sqrt(n)(Gamma_hat - Gamma)``.

    Parameters
    ----------
    s : FunctionalSample
    basis : HSBasis
    mode : {"empirical", "gaussian"}
        ``empirical`` uses fourth moments of the scores, ``gaussian`` the
        Isserlis reduction ``C_ac C_bd + C_ad C_bc`` of the score covariance.
    repair : bool, default=True
        Clip negative eigenvalues (only the empirical matrix can have them).
    """
    if s.n < 2:
        raise ValueError(f"estimate_upsilon needs at least 2 curves, got {s.n}")
    scores = project_scores(s, basis)
    q = basis.q
    if mode == "empirical":
        m = empirical_upsilon_matrix(scores)
    elif mode == "gaussian":
        y = (scores[:, :, None] * scores[:, None, :]).reshape(s.n, q * q)
        cov = y.mean(axis=0).reshape(q, q)
        m = _symmetrize(gaussian_upsilon_matrix(0.5 * (cov + cov.T)), q)
    else:
        raise ValueError(f"unknown upsilon mode {mode!r}")
    clipped = 0.0
    if repair and mode == "empirical":
        m, clipped = psd_repair(m)
    return FourthMomentOperator(basis, m, n=s.n, clipped_mass=clipped, meta={"mode": mode})


def _check_taus(taus, k):
    taus = np.asarray(taus, dtype=float)
    if taus.shape != (k,):
        raise ValueError(f"expected {k} sample fractions, got {taus.shape}")
    if np.any(taus <= 0) or np.any(taus >= 1):
        raise ValueError("sample fractions must lie in (0, 1)")
    if abs(taus.sum() - 1.0) > 1e-12:
        raise ValueError("sample fractions must sum to 1")
    return taus


def _check_same_basis(ups):
    first = ups[0].basis
    for u in ups[1:]:
        if u.basis is not first and not (
            u.basis.q == first.q
            and np.array_equal(u.basis.functions, first.functions)
            and u.basis.grid == first.grid
        ):
            raise ValueError("fourth-moment operators are expressed in different bases")
    return first


def pooled_psi(ups, taus):
    """``Psi = Upsilon_1 / tau_1 + Upsilon_2 / tau_2``."""
    if len(ups) != 2:
        raise ValueError("pooled_psi combines exactly two operators")
    taus = _check_taus(taus, 2)
    basis = _check_same_basis(ups)
    m = ups[0].matrix / taus[0] + ups[1].matrix / taus[1]
    return FourthMomentOperator(
        basis, m, n=sum(u.n for u in ups), clipped_mass=sum(u.clipped_mass for u in ups)
    )


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """``Psi_W`` on ``(k-1)``-tuples of HS operators, stored blockwise."""

    blocks: tuple
    basis: HSBasis
    clipped_mass: float = 0.0

    @property
    def matrix(self):
        return np.block([list(row) for row in self.blocks])


def block_psi_w(ups, taus):
    """k-sample operator: block ``(j, j)`` is ``U_{j+1}/tau_{j+1} + U_1/tau_1``, off-diagonal ``U_1/tau_1``."""
    k = len(ups)
    if k < 2:
        raise ValueError("block_psi_w needs at least 2 operators")
    taus = _check_taus(taus, k)
    basis = _check_same_basis(ups)
    base = ups[0].matrix / taus[0]
    blocks = []
    for i in range(k - 1):
        row = []
        for j in range(k - 1):
            if i == j:
                row.append(ups[0].matrix / taus[0] + ups[i + 1].matrix / taus[i + 1])
            else:
                row.append(base)
        blocks.append(tuple(row))
    return BlockOperator(tuple(blocks), basis, sum(u.clipped_mass for u in ups))


def psi_eigensystem(op, rel_tol=1e-10):
    """Positive eigenvalues (descending) and eigenvectors of ``Psi``."""
    m = np.asarray(op.matrix if hasattr(op, "matrix") else op, dtype=float)
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    top = vals[0] if vals.size else 0.0
    keep = vals > rel_tol * top if top > 0 else np.zeros(vals.shape, dtype=bool)
    return vals[keep], vecs[:, keep]


def psi_eigenvalues(op, max_terms=None, rel_tol=1e-10):
    """Positive eigenvalues of ``Psi`` (or ``Psi_W``) in decreasing order.

    Eigenvalues are clipped at zero and those below ``rel_tol`` times the
    largest are treated as zero.
    """
    m = np.asarray(op.matrix if hasattr(op, "matrix") else op, dtype=float)
    vals = np.linalg.eigvalsh(0.5 * (m + m.T))[::-1]
    vals = np.clip(vals, 0.0, None)
    top = vals[0] if vals.size else 0.0
    vals = vals[vals > rel_tol * top] if top > 0 else vals[:0]
    if max_terms is not None:
        vals = vals[:max_terms]
    return vals
