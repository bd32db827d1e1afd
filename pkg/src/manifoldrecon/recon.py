"""Manifold-regularized recovery with the learned autoencoder as prior.

Minimizes ``||A(X) - Y||^2 + lam ||X - D(X)||^2`` by alternating

    X_{k+1} = argmin_X ||A(X) - Y||^2 + lam ||X - Q_k||^2     (CG)
    Q_{k+1} = D(X_{k+1})

where ``D`` denoises every voxel time profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import logging

import numpy as np

from .dae import DaeParameters, dae_apply_casorati
from .errors import ConfigError, DimensionError, NumericalError
from .numerics import cg_solve, norm

log = logging.getLogger(__name__)


@dataclass
class ReconConfig:
    lam: float | None = None        # None -> 0.1 * max|A^H Y| / n_frames
    outer_iters: int = 10
    cg_iters: int = 30
    cg_tol: float = 1e-6
    init: str = "gridding"          # or "zeros"
    stop_tol: float = 1e-4          # relative change of X between outer iterations
    gamma: float | None = None      # profile scale for the network; None -> theta.gamma

    def validate(self):
        if self.outer_iters < 1 or self.cg_iters < 1:
            raise ConfigError("iteration counts must be >= 1")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.init not in ("gridding", "zeros"):
            raise ConfigError(f"unknown init {self.init!r}")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class ReconResult:
    x: np.ndarray
    data_term: list = field(default_factory=list)
    prior_term: list = field(default_factory=list)
    cg_residuals: list = field(default_factory=list)
    lam: float = 0.0
    gamma: float = 1.0

    @property
    def objective(self):
        return [d + self.lam * p for d, p in zip(self.data_term, self.prior_term)]


def default_lambda(y, op) -> float:
    """Scale-relative default ``0.1 * max|A^H Y| / n_frames``."""
    aty = op.adjoint(y)
    return 0.1 * float(np.max(np.abs(aty))) / aty.shape[1]


def x_update(y, op, q, lam, cg_iters=30, cg_tol=1e-6, x0=None, aty=None, return_info=False):
    """Solve ``(A^H A + lam I) X = A^H Y + lam Q`` by CG."""
    if aty is None:
        aty = op.adjoint(y)
    if q is not None and q.shape != aty.shape:
        raise DimensionError(f"Q has shape {q.shape}, expected {aty.shape}")
    rhs = aty + lam * q if lam else aty

    def normal(x):
        out = op.normal(x)
        return out + lam * x if lam else out

    res = cg_solve(normal, rhs, tol=cg_tol, max_iter=cg_iters, x0=x0)
    return (res.x, res) if return_info else res.x


def data_term(x, y, op) -> float:
    return float(np.sum(np.abs(op.forward(x) - y) ** 2))


def objective_value(x, y, op, theta: DaeParameters, gamma, lam):
    """``(||A(X) - Y||^2, ||X - D(X)||^2)``; the total is ``data + lam * prior``."""
    d = data_term(x, y, op)
    if theta is None:
        return d, 0.0
    q = dae_apply_casorati(theta, x, gamma)
    return d, float(np.sum(np.abs(x - q) ** 2))


def recon_dae(y, op, theta: DaeParameters, gamma=None, cfg: ReconConfig | None = None,
              x_init=None) -> ReconResult:
    """Alternating minimization with the autoencoder prior.

    With ``lam = 0`` this is a single CG-SENSE solve and the network is
    never evaluated. ``gamma`` defaults to the config value, then to the
    scale stored with the network.
    """
    cfg = (cfg or ReconConfig()).validate()
    aty = op.adjoint(y)
    lam = default_lambda(y, op) if cfg.lam is None else float(cfg.lam)
    if gamma is None:
        gamma = cfg.gamma if cfg.gamma is not None else getattr(theta, "gamma", 1.0)
    if lam and theta is not None and theta.dims[0] != aty.shape[1]:
        raise DimensionError(f"network width {theta.dims[0]} != {aty.shape[1]} frames")

    if x_init is not None:
        x = np.array(x_init, dtype=np.complex128)
    elif cfg.init == "gridding" and hasattr(op, "gridding"):
        x = op.gridding(y)
    else:
        x = np.zeros_like(aty)

    result = ReconResult(x, lam=lam, gamma=float(gamma))
    if lam == 0:
        x, info = x_update(y, op, None, 0.0, cfg.cg_iters, cfg.cg_tol, x0=None,
                           aty=aty, return_info=True)
        result.x = x
        result.cg_residuals.append(info.residual)
        result.data_term.append(data_term(x, y, op))
        result.prior_term.append(0.0)
        return result

    q = dae_apply_casorati(theta, x, gamma)
    for k in range(cfg.outer_iters):
        try:
            x_new, info = x_update(y, op, q, lam, cfg.cg_iters, cfg.cg_tol, x0=x,
                                   aty=aty, return_info=True)
        except NumericalError as err:
            result.x = x
            raise NumericalError(f"x-update failed at outer iteration {k}: {err}",
                                 partial=result) from err
        q = dae_apply_casorati(theta, x_new, gamma)
        change = norm(x_new - x) / max(norm(x), 1e-300)
        x = x_new
        result.x = x
        result.cg_residuals.append(info.residual)
        result.data_term.append(data_term(x, y, op))
        result.prior_term.append(float(np.sum(np.abs(x - q) ** 2)))
        obj = result.objective
        if len(obj) > 1 and obj[-1] > obj[-2] * 1.01:
            log.info("objective rose %.2f%% at outer iteration %d",
                     100 * (obj[-1] / obj[-2] - 1), k)
        log.debug("outer %d: data %.4e prior %.4e change %.2e", k,
                  result.data_term[-1], result.prior_term[-1], change)
        if change < cfg.stop_tol:
            break
    return result
