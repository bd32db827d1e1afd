"""In-process pipeline: simulate, learn priors, reconstruct, score.

The CLI subcommands and the benchmark all route through these helpers so a
stage run from the command line and one run from Python produce the same
arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import logging
import time

import numpy as np

from . import acquisition as acq
from .dae import TrainConfig, dae_train, prepare_training_vectors
from .metrics import evaluate, mean_ser
from .phantom import PhantomConfig, generate_coil_maps, generate_phantom
from .priors import estimate_basis, penalized_subspace_recon, subspace_recon, cg_sense
from .recon import ReconConfig, recon_dae

log = logging.getLogger(__name__)


@dataclass
class AcquisitionConfig:
    spokes_per_frame: int = 10
    n_readout: int | None = None        # None -> 2 * max(H, W)
    noise: float = 0.005                # relative to the RMS of noiseless k-space
    n_coils: int = 8
    compress_to: int | None = 4
    coil_seed: int = 0
    noise_seed: int = 1

    def to_dict(self):
        return asdict(self)


def noise_sigma_for(y_clean, relative: float) -> float:
    """Absolute per-sample sigma for a noise level relative to k-space RMS."""
    return float(relative * np.sqrt(np.mean(np.abs(y_clean) ** 2)))


@dataclass
class Simulation:
    x: np.ndarray
    coil_maps: np.ndarray               # source coils
    kdata: acq.KSpaceData               # possibly coil-compressed
    navigators: acq.NavigatorMatrix
    operator: acq.RadialSenseOperator   # matches kdata's (virtual) coils
    phantom_cfg: PhantomConfig
    acq_cfg: AcquisitionConfig
    timings: dict = field(default_factory=dict)


def acquire_relative(x, coil_maps, traj, noise, seed):
    """``acquire`` with sigma given relative to the noiseless k-space RMS."""
    op = acq.RadialSenseOperator(coil_maps, traj)
    clean = op.forward(x)
    sigma = noise_sigma_for(clean, noise)
    kd = acq.acquire(x, coil_maps, traj, 0.0, seed, operator=op)
    if sigma > 0:
        from .numerics import complex_normal, make_rng
        kd.data = clean + complex_normal(make_rng(seed), clean.shape, sigma)
        kd.noise_sigma = sigma
    return kd


def operator_for(kdata: acq.KSpaceData, coil_maps):
    """Radial operator matching ``kdata``, compressing the maps if needed."""
    maps = coil_maps
    if kdata.coil_compression is not None:
        maps = acq.compress_maps(coil_maps, kdata.coil_compression)
    return acq.RadialSenseOperator(maps, kdata.trajectory)


def simulate(pcfg: PhantomConfig | None = None, acfg: AcquisitionConfig | None = None) -> Simulation:
    pcfg = (pcfg or PhantomConfig()).validate()
    acfg = acfg or AcquisitionConfig()
    timings = {}
    t0 = time.perf_counter()
    x = generate_phantom(pcfg)
    maps = generate_coil_maps(pcfg.height, pcfg.width, acfg.n_coils, acfg.coil_seed)
    timings["phantom"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    nro = acfg.n_readout or 2 * max(pcfg.height, pcfg.width)
    traj = acq.golden_angle_trajectory(pcfg.n_frames, acfg.spokes_per_frame, nro)
    kd = acquire_relative(x, maps, traj, acfg.noise, acfg.noise_seed)
    if acfg.compress_to and acfg.compress_to < acfg.n_coils:
        kd = acq.pca_compress_coils(kd, acfg.compress_to)
    nav = acq.extract_navigators(kd)
    op = operator_for(kd, maps)
    timings["acquire"] = time.perf_counter() - t0
    return Simulation(x, maps, kd, nav, op, pcfg, acfg, timings)


def tune(run, grid, score):
    """Evaluate ``run(value)`` over ``grid``; keep the best ``score``.

    Returns ``(best_value, best_output, {value: score})``.
    """
    scores = {}
    best = None
    for v in grid:
        out = run(v)
        s = score(out)
        scores[v] = s
        log.info("sweep value %g -> %.3f", v, s)
        if best is None or s > best[2]:
            best = (v, out, s)
    return best[0], best[1], scores


@dataclass
class BenchmarkConfig:
    rank: int = 30
    subspace_lambdas: tuple = (0.03, 0.1, 0.3)
    subspace_cg_iters: int = 40
    dae_lambdas: tuple = (0.5,)
    outer_iters: int = 8
    cg_iters: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self):
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d


def profile_scale(x) -> float:
    """Peak absolute real/imaginary entry; used to bring voxel profiles to
    the unit-peak range the network was trained on."""
    x = np.asarray(x)
    return float(max(np.max(np.abs(x.real)), np.max(np.abs(x.imag))))


def run_benchmark(sim: Simulation, bcfg: BenchmarkConfig | None = None):
    """Zero-filled gridding, penalized subspace (tuned) and DAE recon (tuned).

    Tuning picks the lambda with the best mean SER against the phantom.
    Returns a dict with reconstructions, metric reports, sweep scores,
    timings and the trained network.
    """
    bcfg = bcfg or BenchmarkConfig()
    h, w = sim.phantom_cfg.height, sim.phantom_cfg.width
    y = sim.kdata.data
    op = sim.operator
    out = {"recons": {}, "sweeps": {}, "timings": dict(sim.timings), "lambdas": {}}

    def score(x):
        return mean_ser(sim.x, x, h, w)

    t0 = time.perf_counter()
    x0 = op.gridding(y)
    out["recons"]["zero-filled"] = x0
    out["timings"]["gridding"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    basis = estimate_basis(sim.navigators, bcfg.rank)
    xs = subspace_recon(y, op, basis, max_iter=bcfg.subspace_cg_iters)
    out["timings"]["subspace"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lam_s, xp, sweep = tune(
        lambda lam: penalized_subspace_recon(y, op, basis, lam, max_iter=bcfg.subspace_cg_iters,
                                             x0=xs),
        bcfg.subspace_lambdas, score)
    out["recons"]["subspace"] = xs
    out["recons"]["penalized-subspace"] = xp
    out["sweeps"]["penalized-subspace"] = sweep
    out["lambdas"]["penalized-subspace"] = lam_s
    out["timings"]["penalized-subspace"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    theta = dae_train(prepare_training_vectors(sim.navigators), bcfg.train)
    out["timings"]["train"] = time.perf_counter() - t0
    out["theta"] = theta

    t0 = time.perf_counter()
    gamma = profile_scale(x0)
    rcfg = ReconConfig(outer_iters=bcfg.outer_iters, cg_iters=bcfg.cg_iters)

    def run_dae(lam):
        rcfg.lam = lam
        return recon_dae(y, op, theta, gamma, rcfg, x_init=x0)

    lam_d, res, sweep = tune(run_dae, bcfg.dae_lambdas, lambda r: score(r.x))
    out["recons"]["dae"] = res.x
    out["dae_result"] = res
    out["sweeps"]["dae"] = sweep
    out["lambdas"]["dae"] = lam_d
    out["timings"]["dae"] = time.perf_counter() - t0

    out["reports"] = {name: evaluate(sim.x, x, h, w) for name, x in out["recons"].items()}
    return out
