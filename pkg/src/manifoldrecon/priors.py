"""Linear subspace baseline for dynamic recovery.

Two formulations share one temporal basis ``V`` (top right singular vectors
of the navigator matrix):

* hard constraint: ``X = U V^H`` with ``U`` fitted to the data,
* penalty: ``||A(X) - Y||^2 + lam ||X (I - V V^H)||_F^2`` over the full ``X``.

The second tends to the first as ``lam`` grows.
"""

from __future__ import annotations

from dataclasses import dataclass
import hashlib
import logging
import warnings

import numpy as np

from .errors import DimensionError, NumericalError
from .numerics import cg_solve, truncated_svd

log = logging.getLogger(__name__)


@dataclass
class SubspaceBasis:
    v: np.ndarray               # (n, r), orthonormal columns
    singular_values: np.ndarray
    source: str = ""            # hash of the navigator matrix

    @property
    def rank(self):
        return self.v.shape[1]

    def project(self, x):
        """Row-space projection ``X V V^H``."""
        return (x @ self.v) @ self.v.conj().T

    def nullspace(self, x):
        """``X N`` with ``N = I - V V^H``, applied without forming N."""
        return x - self.project(x)

    def projector(self) -> np.ndarray:
        """Dense n x n null-space projector; for tests and small n."""
        n = self.v.shape[0]
        return np.eye(n) - self.v @ self.v.conj().T


def _hash(a) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()[:16]


def estimate_basis(z, r: int, seed: int = 0) -> SubspaceBasis:
    """Top-``r`` right singular vectors of the navigator matrix."""
    z = np.asarray(getattr(z, "data", z))
    n = z.shape[1]
    if not 1 <= r <= n:
        raise DimensionError(f"rank {r} outside [1, {n}]")
    r_eff = min(r, z.shape[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, s, v = truncated_svd(z, r_eff, seed=seed)
    if r_eff < r:
        raise DimensionError(f"navigator matrix has only {z.shape[0]} rows")
    if s[0] == 0 or s[-1] <= s[0] * 1e-10:
        warnings.warn(f"rank {r} exceeds the numerical rank of the navigators")
    return SubspaceBasis(v, s, _hash(z))


def penalty(x, basis: SubspaceBasis) -> float:
    """``||X N||_F^2``."""
    return float(np.sum(np.abs(basis.nullspace(x)) ** 2))


def subspace_recon(y, op, basis: SubspaceBasis, tol=1e-8, max_iter=100,
                   return_info=False):
    """Hard subspace-constrained recovery ``X = U V^H``.

    CG runs on the m x r coefficients ``U`` with the normal operator
    ``U -> A^H A (U V^H) V``.
    """
    v = basis.v
    vh = v.conj().T
    rhs = op.adjoint(y) @ v

    def normal(u):
        return op.normal(u @ vh) @ v

    res = cg_solve(normal, rhs, tol=tol, max_iter=max_iter)
    x = res.x @ vh
    if not np.all(np.isfinite(x)):
        raise NumericalError("subspace recon produced non-finite values")
    return (x, res) if return_info else x


def penalized_subspace_recon(y, op, basis: SubspaceBasis, lam: float, tol=1e-8,
                             max_iter=100, x0=None, return_info=False):
    """Minimize ``||A(X) - Y||^2 + lam ||X N||_F^2`` over the full ``X``.

    Normal equations ``(A^H A + lam N) X = A^H Y`` with ``N`` applied on the
    right; ``N`` is Hermitian and idempotent so ``N^H N = N``.

    The solve is preconditioned with ``(s I + lam N)^{-1}``, ``s`` a Rayleigh
    quotient of ``A^H A``. It is exact for the penalty and cheap to apply, and
    for large ``lam`` it leaves the in-subspace iteration close to the hard
    constrained one instead of letting the penalty dominate the spectrum.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    rhs = op.adjoint(y)

    def normal(x):
        out = op.normal(x)
        if lam:
            out = out + lam * basis.nullspace(x)
        return out

    precond = None
    if lam:
        probe = rhs if x0 is None else x0
        pn = float(np.vdot(probe, probe).real)
        scale = float(np.vdot(probe, op.normal(probe)).real) / pn if pn > 0 else 1.0
        shrink = scale / (scale + lam) if scale > 0 else 1.0 / (1.0 + lam)

        def precond(v):
            inside = basis.project(v)
            return inside + shrink * (v - inside)

    res = cg_solve(normal, rhs, tol=tol, max_iter=max_iter, x0=x0, precond=precond)
    if not np.all(np.isfinite(res.x)):
        raise NumericalError("penalized recon produced non-finite values")
    return (res.x, res) if return_info else res.x


def cg_sense(y, op, tol=1e-8, max_iter=100, x0=None, return_info=False):
    """Unregularized least squares ``min ||A(X) - Y||^2``."""
    res = cg_solve(op.normal, op.adjoint(y), tol=tol, max_iter=max_iter, x0=x0)
    return (res.x, res) if return_info else res.x
