"""Command-line pipeline.

Each subcommand reads and writes stage files (CXT1 tensors, CSV tables, PGM
and PNG images) so partial pipelines can be re-run. Exit codes: 0 success,
2 bad usage or input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import acquisition as acq
from . import cxt1
from . import numerics
from .dae import (DaeParameters, TrainConfig, dae_apply, dae_train,
                  prepare_training_vectors)
from .errors import ConfigError, DimensionError, NumericalError, ReconError
from .metrics import MetricReport, evaluate
from .phantom import PhantomConfig, frames_of, generate_coil_maps, generate_phantom
from .priors import (SubspaceBasis, cg_sense, estimate_basis, penalized_subspace_recon,
                     subspace_recon)
from .recon import ReconConfig, recon_dae

log = logging.getLogger("manifoldrecon")

THREADS_ENV = "MANIFOLDRECON_THREADS"
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# persistence helpers

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _read(path, kind=None):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    data, meta = cxt1.read(path)
    if kind is not None and meta.get("kind") != kind:
        raise UsageError(f"{path}: expected a {kind} file, found {meta.get('kind')!r}")
    return data, meta


def _write_text(path, text):
    cxt1.atomic_write_bytes(path, text.encode("utf-8"))


def write_pgm(path, img, vmin=None, vmax=None):
    """8-bit binary PGM (P5) of ``|img|`` windowed to [vmin, vmax]."""
    mag = np.abs(np.asarray(img, dtype=np.complex128))
    lo = float(mag.min()) if vmin is None else float(vmin)
    hi = float(mag.max()) if vmax is None else float(vmax)
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    gray = np.clip(np.rint((mag - lo) * scale), 0, 255).astype(np.uint8)
    h, w = gray.shape
    cxt1.atomic_write_bytes(path, f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes())
    return lo, hi


def read_pgm(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    parts = buf.split(maxsplit=4)
    if parts[0] != b"P5":
        raise UsageError(f"{path} is not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    data = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
    return data, maxval


def update_manifest(out_dir, stage, args, inputs, outputs, timings):
    """Record config, seeds, file hashes and timings for one stage."""
    path = os.path.join(out_dir, "manifest.json")
    manifest = {}
    if os.path.exists(path):
        with open(path) as fh:
            try:
                manifest = json.load(fh)
            except json.JSONDecodeError:
                manifest = {}
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",) and _jsonable(v)}
    manifest[stage] = {
        "config": cfg,
        "seeds": {k: v for k, v in cfg.items() if "seed" in k},
        "inputs": {p: sha256_file(p) for p in inputs if p and os.path.exists(p)},
        "outputs": {p: sha256_file(p) for p in outputs if p and os.path.exists(p)},
        "timings_s": timings,
    }
    _write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def trajectory_from_meta(meta) -> acq.RadialTrajectory:
    t = meta["trajectory"]
    return acq.golden_angle_trajectory(t["n_frames"], t["spokes_per_frame"], t["n_readout"])


def kspace_from_file(path) -> acq.KSpaceData:
    data, meta = _read(path, "kspace")
    comp = meta.get("coil_compression")
    if comp is not None:
        comp = np.array(comp, dtype=float)
        comp = comp[..., 0] + 1j * comp[..., 1]
    return acq.KSpaceData(data, trajectory_from_meta(meta), tuple(meta["image_shape"]),
                          meta.get("noise_sigma", 0.0), comp)


def dae_to_file(path, theta: DaeParameters, extra=None):
    meta = {"kind": "dae", "dims": theta.dims, "gamma": theta.gamma}
    meta.update({k: v for k, v in theta.meta.items() if k != "val_index"})
    meta.update(extra or {})
    cxt1.write(path, theta.flat(), meta)


def dae_from_file(path) -> DaeParameters:
    flat, meta = _read(path, "dae")
    dims = meta["dims"]
    ws, bs, off = [], [], 0
    for fi, fo in zip(dims[:-1], dims[1:]):
        ws.append(flat[off:off + fi * fo].reshape(fo, fi))
        off += fi * fo
        bs.append(flat[off:off + fo].copy())
        off += fo
    if off != flat.size:
        raise UsageError(f"{path}: parameter count does not match dims {dims}")
    return DaeParameters(ws, bs, float(meta["gamma"]), meta)


# --------------------------------------------------------------------------
# subcommands

def cmd_phantom(args):
    cfg = PhantomConfig(args.size, args.size, args.frames, args.cardiac_period,
                        args.resp_period, args.cardiac_amp, args.resp_amp, args.seed)
    try:
        cfg.validate()
    except ConfigError as err:
        raise UsageError(str(err)) from err
    t0 = time.perf_counter()
    x = generate_phantom(cfg)
    maps = generate_coil_maps(cfg.height, cfg.width, args.coils, args.coil_seed)
    ph = os.path.join(args.out_dir, "phantom.cxt1")
    co = os.path.join(args.out_dir, "coils.cxt1")
    cxt1.write(ph, x, {"kind": "casorati", "height": cfg.height, "width": cfg.width,
                       "phantom": cfg.to_dict()})
    cxt1.write(co, maps, {"kind": "coils", "seed": args.coil_seed})
    update_manifest(args.out_dir, "phantom", args, [], [ph, co],
                    {"total": time.perf_counter() - t0})
    print(f"wrote {ph} dims {list(x.shape)} and {co}")


def cmd_acquire(args):
    x, pmeta = _read(args.phantom, "casorati")
    maps, _ = _read(args.coils, "coils")
    h, w = pmeta["height"], pmeta["width"]
    if maps.shape[1:] != (h, w):
        raise UsageError("coil maps do not match the phantom grid")
    from .pipeline import acquire_relative
    t0 = time.perf_counter()
    nro = args.readout or 2 * max(h, w)
    try:
        traj = acq.golden_angle_trajectory(x.shape[1], args.spokes, nro)
    except DimensionError as err:
        raise UsageError(str(err)) from err
    kd = acquire_relative(x, maps, traj, args.noise, args.seed)
    if args.compress and args.compress < maps.shape[0]:
        kd = acq.pca_compress_coils(kd, args.compress)
    elif args.compress and args.compress > maps.shape[0]:
        raise UsageError(f"cannot compress {maps.shape[0]} coils to {args.compress}")
    nav = acq.extract_navigators(kd)
    meta = {"kind": "kspace", "trajectory": traj.params(), "image_shape": [h, w],
            "noise_relative": args.noise, "noise_sigma": kd.noise_sigma, "seed": args.seed}
    if kd.coil_compression is not None:
        u = kd.coil_compression
        meta["coil_compression"] = np.stack([u.real, u.imag], axis=-1).tolist()
    ks = os.path.join(args.out_dir, "kspace.cxt1")
    nv = os.path.join(args.out_dir, "navigators.cxt1")
    cxt1.write(ks, kd.data, meta)
    cxt1.write(nv, nav.data, {"kind": "navigators", "spoke": nav.spoke, "position": nav.position,
                              "coil": nav.coil, "threshold": nav.meta["threshold"],
                              "trajectory": traj.params()})
    update_manifest(args.out_dir, "acquire", args, [args.phantom, args.coils], [ks, nv],
                    {"total": time.perf_counter() - t0})
    print(f"wrote {ks} dims {list(kd.data.shape)} and {nv} dims {list(nav.data.shape)}")


def cmd_train_dae(args):
    z, _ = _read(args.navigators, "navigators")
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, seed=args.seed, bottleneck=args.bottleneck)
    if args.noise_levels:
        cfg.noise_levels = tuple(float(v) for v in args.noise_levels.split(","))
    if args.realizations:
        cfg.realizations_per_level = tuple(int(v) for v in args.realizations.split(","))
    try:
        cfg.validate()
    except ConfigError as err:
        raise UsageError(str(err)) from err
    t0 = time.perf_counter()
    theta = dae_train(prepare_training_vectors(z), cfg, log_every=50)
    dae_to_file(args.out, theta)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    update_manifest(out_dir, "train-dae", args, [args.navigators], [args.out],
                    {"total": time.perf_counter() - t0})
    print(f"wrote {args.out} dims {theta.dims} best epoch {theta.meta['best_epoch']} "
          f"val loss {theta.meta['best_val_loss']:.4e}")


def cmd_basis(args):
    z, _ = _read(args.navigators, "navigators")
    b = estimate_basis(z, args.rank)
    cxt1.write(args.out, b.v, {"kind": "basis", "singular_values": b.singular_values,
                               "source": b.source})
    print(f"wrote {args.out} rank {b.rank}")


def _basis_for(args):
    if args.basis:
        v, meta = _read(args.basis, "basis")
        return SubspaceBasis(v, np.array(meta["singular_values"]), meta.get("source", ""))
    if args.navigators:
        z, _ = _read(args.navigators, "navigators")
        return estimate_basis(z, args.rank)
    raise UsageError("subspace methods need --basis or --navigators")


def cmd_recon(args):
    kd = kspace_from_file(args.kspace)
    maps, _ = _read(args.coils, "coils")
    from .pipeline import operator_for, profile_scale
    op = operator_for(kd, maps)
    y = kd.data
    t0 = time.perf_counter()
    trace = None
    meta = {"kind": "casorati", "height": kd.image_shape[0], "width": kd.image_shape[1],
            "method": args.method}
    if args.method == "gridding":
        x = op.gridding(y)
    elif args.method == "cg-sense":
        x, info = cg_sense(y, op, tol=args.cg_tol, max_iter=args.cg_iters, return_info=True)
        meta["cg_residual"] = info.residual
    elif args.method in ("subspace", "penalized-subspace"):
        basis = _basis_for(args)
        xs, info = subspace_recon(y, op, basis, tol=args.cg_tol, max_iter=args.cg_iters,
                                  return_info=True)
        meta["rank"] = basis.rank
        if args.method == "penalized-subspace":
            lam = 1.0 if args.lam is None else args.lam
            # warm start from the hard solution; the fixed point does not depend on it
            x, info = penalized_subspace_recon(y, op, basis, lam, tol=args.cg_tol,
                                               max_iter=args.cg_iters, x0=xs,
                                               return_info=True)
            meta["lambda"] = lam
        else:
            x = xs
        meta["cg_residual"] = info.residual
    elif args.method == "dae":
        if not args.dae:
            raise UsageError("--method dae needs --dae")
        theta = dae_from_file(args.dae)
        x0 = op.gridding(y)
        gamma = args.gamma if args.gamma is not None else profile_scale(x0)
        cfg = ReconConfig(lam=args.lam, outer_iters=args.outer_iters, cg_iters=args.cg_iters,
                          cg_tol=args.cg_tol)
        res = recon_dae(y, op, theta, gamma, cfg, x_init=x0)
        x = res.x
        meta.update({"lambda": res.lam, "gamma": gamma, "outer_iters": len(res.data_term)})
        trace = res
    else:
        raise UsageError(f"unknown method {args.method}")
    cxt1.write(args.out, x, meta)
    outputs = [args.out]
    if trace is not None:
        path = args.trace or os.path.splitext(args.out)[0] + "_trace.csv"
        lines = ["iteration,data_term,prior_term,objective,cg_residual"]
        for i, (d, p, r) in enumerate(zip(trace.data_term, trace.prior_term, trace.cg_residuals)):
            lines.append(f"{i + 1},{d!r},{p!r},{d + trace.lam * p!r},{r!r}")
        _write_text(path, "\n".join(lines) + "\n")
        outputs.append(path)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    update_manifest(out_dir, f"recon-{args.method}", args,
                    [args.kspace, args.coils, args.dae, args.basis, args.navigators], outputs,
                    {"total": time.perf_counter() - t0})
    print(f"wrote {args.out} ({args.method})")


def cmd_eval(args):
    rec, rmeta = _read(args.recon, "casorati")
    ref, pmeta = _read(args.phantom, "casorati")
    if rec.shape != ref.shape:
        raise UsageError(f"shape mismatch {rec.shape} vs {ref.shape}")
    rep = evaluate(ref, rec, pmeta["height"], pmeta["width"])
    _write_text(args.out, rep.to_csv())
    s = rep.summary()
    print(" ".join(f"{k}={m:.4f}+/-{sd:.4f}" for k, (m, sd) in s.items()))


def cmd_render(args):
    data, meta = _read(args.input)
    if meta.get("kind") != "casorati":
        raise UsageError("render expects a Casorati (image series) file")
    h, w = meta["height"], meta["width"]
    frames = frames_of(data, h, w)
    if args.profile_row is not None:
        if not 0 <= args.profile_row < h:
            raise UsageError(f"row {args.profile_row} outside [0, {h})")
        img = frames[:, args.profile_row, :]
        what = f"time profile of row {args.profile_row} (frames along y)"
    else:
        k = args.frame or 0
        if not 0 <= k < frames.shape[0]:
            raise UsageError(f"frame {k} outside [0, {frames.shape[0]})")
        img = frames[k]
        what = f"frame {k}"
    lo, hi = write_pgm(args.out, img)
    _write_text(os.path.splitext(args.out)[0] + ".window.txt",
                f"source {os.path.basename(args.input)}\n{what}\n"
                f"gray 0 = |x| {lo!r}\ngray 255 = |x| {hi!r}\n")
    print(f"wrote {args.out}")


def cmd_compare(args):
    a, _ = _read(args.a)
    b, _ = _read(args.b)
    if a.shape != b.shape:
        raise UsageError(f"shape mismatch {a.shape} vs {b.shape}")
    rel = float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
    ok = rel <= args.tol
    print(f"relative difference {rel:.3e} ({'within' if ok else 'exceeds'} {args.tol:g})")
    return 0 if ok else 1


def cmd_report(args):
    from . import plotting
    ref, pmeta = _read(args.phantom, "casorati")
    h, w = pmeta["height"], pmeta["width"]
    series = {"truth": ref}
    summaries = {}
    rows = ["method,ser_mean,ser_std,ssim_mean,ssim_std,hfen_mean,hfen_std"]
    for spec in args.recon:
        if "=" not in spec:
            raise UsageError(f"--recon expects name=path, got {spec!r}")
        name, path = spec.split("=", 1)
        x, _ = _read(path, "casorati")
        series[name] = x
        rep = evaluate(ref, x, h, w)
        _write_text(os.path.join(args.out_dir, f"metrics_{name}.csv"), rep.to_csv())
        s = rep.summary()
        summaries[name] = s
        rows.append(",".join([name] + [repr(v) for k in ("ser", "ssim", "hfen") for v in s[k]]))
    _write_text(os.path.join(args.out_dir, "summary.csv"), "\n".join(rows) + "\n")
    row = args.profile_row if args.profile_row is not None else h // 2
    plotting.frames_and_profiles(series, h, w, args.frame, row,
                                 os.path.join(args.out_dir, "frames_profiles.png"))
    if summaries:
        plotting.metric_bars(summaries, os.path.join(args.out_dir, "metrics.png"))
    print("\n".join(rows))


def cmd_benchmark(args):
    from .pipeline import AcquisitionConfig, BenchmarkConfig, simulate, run_benchmark
    from . import plotting
    pcfg = PhantomConfig(args.size, args.size, args.frames, seed=args.seed)
    acfg = AcquisitionConfig(spokes_per_frame=args.spokes, noise=args.noise,
                             compress_to=args.compress)
    bcfg = BenchmarkConfig(rank=args.rank, outer_iters=args.outer_iters, cg_iters=args.cg_iters,
                           train=TrainConfig(epochs=args.epochs, seed=args.seed))
    if args.subspace_lambdas:
        bcfg.subspace_lambdas = tuple(float(v) for v in args.subspace_lambdas.split(","))
    if args.dae_lambdas:
        bcfg.dae_lambdas = tuple(float(v) for v in args.dae_lambdas.split(","))
    t0 = time.perf_counter()
    sim = simulate(pcfg, acfg)
    res = run_benchmark(sim, bcfg)
    os.makedirs(args.out_dir, exist_ok=True)
    h, w = pcfg.height, pcfg.width
    rows = ["method,lambda,ser_mean,ser_std,ssim_mean,ssim_std,hfen_mean,hfen_std"]
    for name, rep in res["reports"].items():
        s = rep.summary()
        lam = res["lambdas"].get(name, "")
        rows.append(",".join([name, str(lam)] + [f"{v:.6f}" for k in ("ser", "ssim", "hfen")
                                                 for v in s[k]]))
        _write_text(os.path.join(args.out_dir, f"metrics_{name}.csv"), rep.to_csv())
        cxt1.write(os.path.join(args.out_dir, f"recon_{name}.cxt1"), res["recons"][name],
                   {"kind": "casorati", "height": h, "width": w, "method": name})
    _write_text(os.path.join(args.out_dir, "summary.csv"), "\n".join(rows) + "\n")
    series = {"truth": sim.x}
    series.update(res["recons"])
    plotting.frames_and_profiles(series, h, w, 0, None,
                                 os.path.join(args.out_dir, "frames_profiles.png"))
    plotting.metric_bars({k: r.summary() for k, r in res["reports"].items()},
                         os.path.join(args.out_dir, "metrics.png"))
    r = res["dae_result"]
    plotting.objective_trace(r.data_term, r.prior_term, r.lam,
                             os.path.join(args.out_dir, "dae_trace.png"))
    timings = dict(res["timings"])
    timings["total"] = time.perf_counter() - t0
    _write_text(os.path.join(args.out_dir, "timings.json"),
                json.dumps(timings, indent=2, sort_keys=True) + "\n")
    print("\n".join(rows))


# --------------------------------------------------------------------------
# argument parsing

def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys use option names
    with dashes or underscores."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="manifoldrecon", description=__doc__.split("\n")[0])
    p.add_argument("--threads", type=int, default=None,
                   help=f"FFT worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--config", help="key=value file supplying option defaults")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", help="generate the dynamic phantom and coil maps")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--cardiac-period", type=int, default=22)
    s.add_argument("--resp-period", type=int, default=85)
    s.add_argument("--cardiac-amp", type=float, default=0.15)
    s.add_argument("--resp-amp", type=float, default=4.0)
    s.add_argument("--coils", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--coil-seed", type=int, default=0)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("acquire", help="simulate radial k-space and extract navigators")
    s.add_argument("--phantom", required=True)
    s.add_argument("--coils", required=True)
    s.add_argument("--out-dir", default=".")
    s.add_argument("--spokes", type=int, default=10)
    s.add_argument("--readout", type=int, default=None)
    s.add_argument("--noise", type=float, default=0.01,
                   help="noise sigma relative to the RMS of noiseless k-space")
    s.add_argument("--compress", type=int, default=4)
    s.add_argument("--seed", type=int, default=1)
    s.set_defaults(func=cmd_acquire)

    s = sub.add_parser("train-dae", help="train the autoencoder on navigators")
    s.add_argument("--navigators", required=True)
    s.add_argument("--out", default="dae.cxt1")
    s.add_argument("--epochs", type=int, default=500)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--bottleneck", type=int, default=None)
    s.add_argument("--noise-levels", default=None, help="comma-separated sigmas")
    s.add_argument("--realizations", default=None, help="comma-separated counts")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train_dae)

    s = sub.add_parser("basis", help="estimate the temporal subspace from navigators")
    s.add_argument("--navigators", required=True)
    s.add_argument("--rank", type=int, default=30)
    s.add_argument("--out", default="basis.cxt1")
    s.set_defaults(func=cmd_basis)

    s = sub.add_parser("recon", help="reconstruct the image series")
    s.add_argument("--kspace", required=True)
    s.add_argument("--coils", required=True)
    s.add_argument("--method", default="dae",
                   choices=["dae", "subspace", "penalized-subspace", "cg-sense", "gridding"])
    s.add_argument("--dae")
    s.add_argument("--basis")
    s.add_argument("--navigators")
    s.add_argument("--rank", type=int, default=30)
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--gamma", type=float, default=None)
    s.add_argument("--outer-iters", type=int, default=10)
    s.add_argument("--cg-iters", type=int, default=30)
    s.add_argument("--cg-tol", type=float, default=1e-6)
    s.add_argument("--out", default="recon.cxt1")
    s.add_argument("--trace", default=None)
    s.set_defaults(func=cmd_recon)

    s = sub.add_parser("eval", help="per-frame SER / SSIM / HFEN against the phantom")
    s.add_argument("--recon", required=True)
    s.add_argument("--phantom", required=True)
    s.add_argument("--out", default="metrics.csv")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("render", help="write a frame or an x-t profile as PGM")
    s.add_argument("input")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--frame", type=int, default=None)
    g.add_argument("--profile-row", type=int, default=None)
    s.add_argument("--out", default="frame.pgm")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("compare", help="relative Frobenius difference of two tensors")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--tol", type=float, default=1e-3)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("report", help="metric tables and PNG figures for several recons")
    s.add_argument("--phantom", required=True)
    s.add_argument("--recon", action="append", default=[], metavar="NAME=PATH")
    s.add_argument("--frame", type=int, default=0)
    s.add_argument("--profile-row", type=int, default=None)
    s.add_argument("--out-dir", default="report")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("benchmark", help="full simulate / train / recon / score run")
    s.add_argument("--out-dir", default="benchmark")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--frames", type=int, default=200)
    s.add_argument("--spokes", type=int, default=10)
    s.add_argument("--noise", type=float, default=0.005)
    s.add_argument("--compress", type=int, default=4)
    s.add_argument("--rank", type=int, default=30)
    s.add_argument("--epochs", type=int, default=500)
    s.add_argument("--outer-iters", type=int, default=8)
    s.add_argument("--cg-iters", type=int, default=5)
    s.add_argument("--subspace-lambdas", default=None)
    s.add_argument("--dae-lambdas", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_benchmark)
    return p


def _apply_config(parser, argv):
    """Feed ``--config`` values in as defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config_file(known.config)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest: a for a in sp._actions}
            sp.set_defaults(**{k: (dests[k].type(v) if dests[k].type else v)
                               for k, v in values.items() if k in dests})


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, UsageError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code else 0
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads or int(os.environ.get(THREADS_ENV, "1") or 1)
    numerics.FFT_WORKERS = max(1, threads)
    acq.FFT_WORKERS = numerics.FFT_WORKERS
    try:
        rc = args.func(args)
    except (FileNotFoundError, UsageError, ConfigError, DimensionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except cxt1.FormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ReconError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
