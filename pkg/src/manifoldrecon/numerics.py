"""Complex linear-algebra kernels shared by the rest of the package.

Everything here works in float64 / complex128. Random streams come from
numpy's Philox counter-based generator, which yields the same values on
every platform for a given seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.fft

from .errors import DimensionError, NumericalError

log = logging.getLogger(__name__)

# default worker count for scipy.fft; each transform runs on one thread so
# results do not depend on this value
FFT_WORKERS = 1


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator; identical seed gives an identical stream."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def complex_normal(rng: np.random.Generator, shape, sigma=1.0) -> np.ndarray:
    """Circular complex Gaussian samples with E|z|^2 = sigma^2."""
    scale = sigma / np.sqrt(2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)


def _is_pow2(v: int) -> bool:
    return v > 0 and (v & (v - 1)) == 0


def fft2_centered(img: np.ndarray, inverse: bool = False, workers=None) -> np.ndarray:
    """Orthonormal 2-D DFT over the last two axes with DC at the array center.

    Leading axes are treated as a batch.
    """
    img = np.asarray(img)
    if img.ndim < 2:
        raise DimensionError("fft2_centered needs at least 2 dimensions")
    h, w = img.shape[-2:]
    if not (_is_pow2(h) and _is_pow2(w)):
        raise DimensionError(f"grid {h}x{w} is not a power of two")
    workers = FFT_WORKERS if workers is None else workers
    axes = (-2, -1)
    x = scipy.fft.ifftshift(img, axes=axes)
    if inverse:
        x = scipy.fft.ifft2(x, axes=axes, norm="ortho", workers=workers)
    else:
        x = scipy.fft.fft2(x, axes=axes, norm="ortho", workers=workers)
    return scipy.fft.fftshift(x, axes=axes)


def vdot(a: np.ndarray, b: np.ndarray) -> complex:
    """Euclidean inner product <a, b> = sum(conj(a) * b) over all entries."""
    return np.vdot(a.ravel(), b.ravel())


def norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a.ravel()))


@dataclass
class CGResult:
    x: np.ndarray
    residuals: list = field(default_factory=list)  # relative, one per iteration (index 0 = start)
    n_iter: int = 0
    converged: bool = False

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0


def cg_solve(apply_op, rhs, tol=1e-8, max_iter=100, x0=None, method="cr",
             callback=None, precond=None) -> CGResult:
    """Solve ``apply_op(x) = rhs`` for a Hermitian positive definite map.

    Parameters
    ----------
    apply_op : callable
        Maps an array shaped like ``rhs`` to an array of the same shape.
    rhs : ndarray
        Right-hand side, any shape.
    tol : float
        Stop once ``||rhs - apply_op(x)|| <= tol * ||rhs||``.
    max_iter : int
        Iteration cap. Hitting it is not an error; check ``converged``.
    x0 : ndarray, optional
        Warm start.
    method : {"cr", "cg"}
        ``"cr"`` (conjugate residual) keeps the residual norm non-increasing
        while also decreasing the quadratic objective; ``"cg"`` is the
        classical Hestenes-Stiefel recursion. Both cost one operator
        application per iteration.
    callback : callable, optional
        Called as ``callback(k, x)`` after every iteration.
    precond : callable, optional
        Hermitian positive definite approximation of the inverse operator.
        With a preconditioner the monotone quantity is the residual in the
        preconditioner's norm; the stopping test still uses the plain
        residual.

    Returns
    -------
    CGResult
    """
    if method not in ("cr", "cg"):
        raise ValueError(f"unknown method {method!r}")
    prec = precond if precond is not None else (lambda v: v)
    b = np.asarray(rhs)
    bnorm = norm(b)
    if x0 is None:
        x = np.zeros_like(b, dtype=np.result_type(b, np.complex128))
        r = b.astype(x.dtype, copy=True)
    else:
        x = np.array(x0, dtype=np.result_type(x0, b, np.complex128), copy=True)
        r = b - apply_op(x)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(x), [0.0], 0, True)

    res = [norm(r) / bnorm]
    if res[0] <= tol:
        return CGResult(x, res, 0, True)

    z = prec(r)
    p = z.copy()
    if method == "cr":
        az = apply_op(z)
        ap = az.copy()
        rho = vdot(z, az).real
    else:
        rho = vdot(r, z).real

    k = 0
    converged = False
    while k < max_iter:
        if method == "cr":
            q = ap
            mq = prec(ap)
            denom = vdot(ap, mq).real
        else:
            q = apply_op(p)
            denom = vdot(p, q).real
        if not np.isfinite(denom) or denom <= 0.0:
            if denom == 0.0 and rho == 0.0:
                converged = True
                break
            raise NumericalError(f"breakdown at iteration {k}: <p, Ap> = {denom}",
                                 partial=CGResult(x, res, k, False))
        alpha = rho / denom
        x += alpha * p
        r -= alpha * q
        k += 1
        rel = norm(r) / bnorm
        if not np.isfinite(rel):
            raise NumericalError(f"non-finite residual at iteration {k}",
                                 partial=CGResult(x - alpha * p, res, k - 1, False))
        res.append(rel)
        if callback is not None:
            callback(k, x)
        if rel <= tol:
            converged = True
            break
        if method == "cr":
            z = z - alpha * mq if precond is not None else r
            az = apply_op(z)
            rho_new = vdot(z, az).real
            beta = rho_new / rho
            p = z + beta * p
            ap = az + beta * ap
        else:
            z = prec(r)
            rho_new = vdot(r, z).real
            beta = rho_new / rho
            p = z + beta * p
        rho = rho_new
    return CGResult(x, res, k, converged)


def gram_schmidt(a: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    """Orthonormalize the columns of ``a`` by modified Gram-Schmidt, run twice.

    Columns that collapse numerically are replaced by fresh random directions
    so the output always has orthonormal columns.
    """
    q = np.array(a, dtype=np.complex128, copy=True)
    p, k = q.shape
    for j in range(k):
        v = q[:, j]
        n0 = np.linalg.norm(v)
        for _ in range(2):
            for i in range(j):
                v -= np.vdot(q[:, i], v) * q[:, i]
        nv = np.linalg.norm(v)
        if nv <= 1e-13 * max(n0, 1e-300):
            if rng is None:
                rng = make_rng(j + 1)
            v = complex_normal(rng, p)
            for _ in range(2):
                for i in range(j):
                    v -= np.vdot(q[:, i], v) * q[:, i]
            nv = np.linalg.norm(v)
        q[:, j] = v / nv
    return q


def truncated_svd(mat, r: int, max_iter: int = 500, tol: float = 1e-10,
                  oversample: int = 10, seed: int = 0):
    """Top-``r`` singular triplets of a complex matrix by subspace iteration.

    A block of ``r + oversample`` vectors is pushed through ``mat^H mat`` and
    re-orthonormalized each sweep; a Rayleigh-Ritz step orders the block.
    Iteration stops when the sine of the largest principal angle between
    successive top-``r`` subspaces drops below ``tol``.

    Returns
    -------
    (U, S, V)
        ``U`` is p x r, ``S`` holds r non-increasing non-negative values,
        ``V`` is n x r with orthonormal columns, and mat ~= U diag(S) V^H.
    """
    a = np.asarray(mat, dtype=np.complex128)
    if a.ndim != 2:
        raise DimensionError("truncated_svd expects a matrix")
    p, n = a.shape
    if not 1 <= r <= min(p, n):
        raise DimensionError(f"rank {r} outside [1, {min(p, n)}]")
    b = min(n, p, r + oversample)
    rng = make_rng(seed)
    q = gram_schmidt(complex_normal(rng, (n, b)), rng)
    v_old = None
    for it in range(1, max_iter + 1):
        w = a.conj().T @ (a @ q)
        q = gram_schmidt(w, rng)
        # Rayleigh-Ritz through the SVD of the thin product: singular values
        # come out accurate to eps * sig[0] instead of sqrt(eps) * sig[0]
        _, sig, wh = np.linalg.svd(a @ q, full_matrices=False)
        q = q @ wh.conj().T
        # directions with numerically zero singular value never settle; skip them
        live = sig[:r] > sig[0] * 1e-10 if sig[0] > 0 else np.zeros(r, bool)
        v_new = q[:, :r][:, live]
        if v_old is not None and v_new.shape[1] == v_old.shape[1]:
            if v_new.shape[1] == 0:
                break
            resid = v_new - v_old @ (v_old.conj().T @ v_new)
            angle = np.linalg.norm(resid, 2)
            if angle < tol:
                break
        v_old = v_new
    else:
        raise NumericalError(f"subspace iteration did not converge in {max_iter} sweeps")
    if not live.all():
        log.warning("requested rank %d exceeds numerical rank %d", r, int(live.sum()))

    # final Ritz step on the thin product for accurate small singular values
    bq = a @ q
    uu, ss, wh = np.linalg.svd(bq, full_matrices=False)
    v = q @ wh.conj().T
    return uu[:, :r], ss[:r].copy(), v[:, :r]
