"""Radial multi-coil acquisition: trajectory, NUFFT forward model, navigators.

Sampling convention: a k-space sample at ``k = (kx, ky)`` (radians per pixel,
``|k| <= pi``) of coil ``i`` is

    y_i(k) = c * sum_r x(r) s_i(r) exp(+j k . r),    c = 1 / sqrt(H * W)

with ``r = (x, y)`` measured in pixels from the grid center. The NUFFT uses
Kaiser-Bessel gridding on a 2x oversampled grid with a 4-point kernel and
image-domain deapodization; its adjoint is exact (transpose of the same
chain), so CG on ``A^H A`` sees a Hermitian operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.fft
import scipy.sparse
from scipy.special import i0

from .errors import DimensionError
from .numerics import FFT_WORKERS, complex_normal, make_rng, fft2_centered
from .phantom import frames_of, casorati_of

log = logging.getLogger(__name__)

# pi / golden ratio: 111.246 deg, 1.94161 rad
GOLDEN_ANGLE = np.pi * (np.sqrt(5.0) - 1.0) / 2.0
N_NAVIGATORS = 2
NAVIGATOR_ANGLES = (0.0, np.pi / 2)


# --------------------------------------------------------------------------
# trajectory

@dataclass
class RadialTrajectory:
    n_frames: int
    spokes_per_frame: int
    n_readout: int
    angles: np.ndarray          # (n_frames, spokes_per_frame), radians

    @property
    def readout_k(self) -> np.ndarray:
        """Radial k positions of one spoke, in [-pi, pi)."""
        r = self.n_readout
        return 2 * np.pi * (np.arange(r) - r // 2) / r

    def frame_coords(self, t: int) -> np.ndarray:
        """(spokes, readout, 2) array of (kx, ky) for frame ``t``."""
        k = self.readout_k
        th = self.angles[t]
        return np.stack([np.cos(th)[:, None] * k[None, :],
                         np.sin(th)[:, None] * k[None, :]], axis=-1)

    @property
    def coords(self) -> np.ndarray:
        return np.stack([self.frame_coords(t) for t in range(self.n_frames)])

    def params(self) -> dict:
        return {"n_frames": self.n_frames, "spokes_per_frame": self.spokes_per_frame,
                "n_readout": self.n_readout}


def golden_angle_trajectory(n_frames: int, spokes_per_frame: int = 10,
                            n_readout: int = 256) -> RadialTrajectory:
    """Per frame: spokes 0 and 1 are navigators at 0 and pi/2, the rest
    follow one global golden-angle sequence ``j * GOLDEN_ANGLE mod pi``."""
    if spokes_per_frame < N_NAVIGATORS + 1:
        raise DimensionError("spokes_per_frame must be at least 3")
    if n_frames < 1 or n_readout < 2 or n_readout % 2:
        raise DimensionError("need n_frames >= 1 and an even n_readout")
    n_gold = spokes_per_frame - N_NAVIGATORS
    j = np.arange(n_frames * n_gold, dtype=np.float64).reshape(n_frames, n_gold)
    angles = np.empty((n_frames, spokes_per_frame))
    angles[:, :N_NAVIGATORS] = NAVIGATOR_ANGLES
    angles[:, N_NAVIGATORS:] = np.mod(j * GOLDEN_ANGLE, np.pi)
    return RadialTrajectory(n_frames, spokes_per_frame, n_readout, angles)


def radial_dcf(traj: RadialTrajectory, image_shape) -> np.ndarray:
    """Ramp density compensation, shape (n_frames, spokes, readout).

    Each sample gets ``|k| * dk * dtheta`` where ``dtheta`` is the half-gap
    to the neighbouring spokes of the same frame (angles taken mod pi) and
    the k=0 sample uses ``|k| = dk / 4``. Each frame is then scaled to unit DC
    gain: the sum of the gridded image equals the sum of the true one for
    data from a constant object. By the adjoint identity that gain is
    ``c^2 * sum_i w_i D(k_i)`` with ``D`` the Dirichlet kernel of the pixel
    grid, so no transform is needed to evaluate it.
    """
    h, w = image_shape
    k = np.abs(traj.readout_k)
    dk = 2 * np.pi / traj.n_readout
    k = np.where(k == 0, dk / 4, k)
    out = np.empty((traj.n_frames, traj.spokes_per_frame, traj.n_readout))
    for t in range(traj.n_frames):
        th = np.mod(traj.angles[t], np.pi)
        uniq, inv, counts = np.unique(np.round(th, 12), return_inverse=True,
                                      return_counts=True)
        if len(uniq) == 1:
            gaps = np.array([np.pi])
        else:
            nxt = np.roll(uniq, -1)
            nxt[-1] += np.pi
            prv = np.roll(uniq, 1)
            prv[0] -= np.pi
            gaps = (nxt - prv) / 2
        dtheta = gaps[inv] / counts[inv]
        out[t] = dtheta[:, None] * k[None, :] * dk
        coords = traj.frame_coords(t)
        dc = np.real(_dirichlet(coords[..., 1], h) * _dirichlet(coords[..., 0], w))
        out[t] /= np.sum(out[t] * dc) / (h * w)
    return out


def _dirichlet(k, n):
    """``sum_r exp(j k r)`` over the centered pixel offsets ``r = -n/2 .. n/2-1``."""
    k = np.asarray(k, dtype=float)
    half = np.sin(k / 2)
    small = np.abs(half) < 1e-12
    ratio = np.where(small, n, np.sin(n * k / 2) / np.where(small, 1.0, half))
    # offsets are not symmetric about zero; the leftover phase is exp(-j k / 2)
    return ratio * np.exp(-0.5j * k)


# --------------------------------------------------------------------------
# NUFFT

def kaiser_bessel(d, width, beta):
    """KB kernel at distances ``d`` (grid units); zero outside ``|d| <= width/2``."""
    d = np.asarray(d, dtype=float)
    arg = 1.0 - (2.0 * d / width) ** 2
    out = np.zeros_like(d)
    inside = arg >= 0
    out[inside] = i0(beta * np.sqrt(arg[inside]))
    return out


def beatty_beta(width, oversamp):
    return np.pi * np.sqrt((width / oversamp) ** 2 * (oversamp - 0.5) ** 2 - 0.8)


def kb_apodization(r, grid, width, beta):
    """Continuous Fourier transform of the KB kernel at image offsets ``r``."""
    a = np.pi * width * np.asarray(r, dtype=float) / grid
    z = beta ** 2 - a ** 2
    out = np.empty_like(a)
    pos = z > 0
    sz = np.sqrt(z[pos])
    out[pos] = width * np.sinh(sz) / sz
    neg = ~pos
    sz = np.sqrt(-z[neg])
    out[neg] = width * np.sinc(sz / np.pi)
    return out


def _to_spectrum(img, grid_shape):
    """Unnormalized ``sum_r img(r) exp(+2j pi q r / G)`` on an oversampled grid.

    The image (centered coordinates) is written at wrapped indices and the
    spectrum is left unshifted (frequency ``q`` at index ``q mod G``). Row
    transforms run only over the rows holding data.
    """
    gy, gx = grid_shape
    h, w = img.shape[-2:]
    lead = img.shape[:-2]
    a = np.zeros(lead + (h, gx), dtype=np.complex128)
    a[..., :, : w - w // 2] = img[..., :, w // 2:]
    a[..., :, gx - w // 2:] = img[..., :, : w // 2]
    a = scipy.fft.ifft(a, axis=-1, norm="forward", workers=FFT_WORKERS, overwrite_x=True)
    b = np.zeros(lead + (gy, gx), dtype=np.complex128)
    b[..., : h - h // 2, :] = a[..., h // 2:, :]
    b[..., gy - h // 2:, :] = a[..., : h // 2, :]
    return scipy.fft.ifft(b, axis=-2, norm="forward", workers=FFT_WORKERS, overwrite_x=True)


def _from_spectrum(g, image_shape):
    """Adjoint of ``_to_spectrum``: unnormalized forward DFT, cropped."""
    h, w = image_shape
    gy, gx = g.shape[-2:]
    g = scipy.fft.fft(g, axis=-2, workers=FFT_WORKERS)
    a = np.concatenate([g[..., gy - h // 2:, :], g[..., : h - h // 2, :]], axis=-2)
    a = scipy.fft.fft(a, axis=-1, workers=FFT_WORKERS, overwrite_x=True)
    return np.concatenate([a[..., gx - w // 2:], a[..., : w - w // 2]], axis=-1)


class NufftPlan:
    """Type-2 NUFFT (image -> arbitrary k) and its exact adjoint for one set of
    sample coordinates on an H x W grid.

    ``forward`` and ``adjoint`` operate on the last two image axes / the last
    sample axis; leading axes are batched.
    """

    def __init__(self, image_shape, coords, oversamp=2.0, width=4):
        h, w = image_shape
        self.image_shape = (h, w)
        self.grid_shape = (int(round(oversamp * h)), int(round(oversamp * w)))
        gy, gx = self.grid_shape
        coords = np.asarray(coords, dtype=float).reshape(-1, 2)
        kr = np.hypot(coords[:, 0], coords[:, 1])
        if np.any(kr > np.pi * (1 + 1e-12)):
            raise DimensionError("trajectory point with |k| > pi")
        self.n_samples = coords.shape[0]
        self.width = width
        self.beta = beatty_beta(width, oversamp)
        self.scale = 1.0 / np.sqrt(h * w)

        ux = coords[:, 0] * gx / (2 * np.pi)
        uy = coords[:, 1] * gy / (2 * np.pi)
        offs = np.arange(width)
        qx = np.ceil(ux - width / 2)[:, None] + offs[None, :]
        qy = np.ceil(uy - width / 2)[:, None] + offs[None, :]
        wx = kaiser_bessel(ux[:, None] - qx, width, self.beta)
        wy = kaiser_bessel(uy[:, None] - qy, width, self.beta)
        ix = np.mod(qx.astype(np.int64), gx)
        iy = np.mod(qy.astype(np.int64), gy)
        cols = (iy[:, :, None] * gx + ix[:, None, :]).reshape(self.n_samples, -1)
        vals = (wy[:, :, None] * wx[:, None, :]).reshape(self.n_samples, -1)
        rows = np.repeat(np.arange(self.n_samples), width * width)
        self.interp = scipy.sparse.csr_matrix(
            (vals.ravel(), (rows, cols.ravel())), shape=(self.n_samples, gy * gx))
        self.interp.sum_duplicates()
        self.interp_t = self.interp.T.tocsr()

        ry = np.arange(h) - h // 2
        rx = np.arange(w) - w // 2
        apo = np.outer(kb_apodization(ry, gy, width, self.beta),
                       kb_apodization(rx, gx, width, self.beta))
        self.deapod = 1.0 / apo

    def interpolate(self, spectrum):
        """(..., Gy, Gx) spectrum -> (..., M) samples, without the scale."""
        lead = spectrum.shape[:-2]
        g = spectrum.reshape(-1, self.grid_shape[0] * self.grid_shape[1])
        return (self.interp @ g.T).T.reshape(lead + (self.n_samples,))

    def spread(self, samples):
        """Adjoint of ``interpolate``."""
        lead = samples.shape[:-1]
        s = samples.reshape(-1, self.n_samples)
        return (self.interp_t @ s.T).T.reshape(lead + self.grid_shape)

    def forward(self, img):
        img = np.asarray(img)
        spec = _to_spectrum(img * self.deapod, self.grid_shape)
        return self.scale * self.interpolate(spec)

    def adjoint(self, samples):
        g = self.spread(np.asarray(samples, dtype=np.complex128))
        return self.scale * _from_spectrum(g, self.image_shape) * self.deapod


def nufft_forward(frame_img, coil_maps, frame_coords, oversamp=2.0, width=4):
    """Multi-coil samples of one frame, shape (coils, spokes, readout)."""
    frame_coords = np.asarray(frame_coords)
    maps = np.asarray(coil_maps)
    if maps.shape[-2:] != np.shape(frame_img):
        raise DimensionError("coil maps do not match the image grid")
    plan = NufftPlan(np.shape(frame_img), frame_coords, oversamp, width)
    out = plan.forward(maps * frame_img)
    return out.reshape((maps.shape[0],) + frame_coords.shape[:-1])


def nufft_adjoint(samples, coil_maps, frame_coords, dcf=None, oversamp=2.0, width=4):
    """Coil-combined adjoint (or density-weighted gridding if ``dcf`` given)."""
    maps = np.asarray(coil_maps)
    frame_coords = np.asarray(frame_coords)
    plan = NufftPlan(maps.shape[-2:], frame_coords, oversamp, width)
    s = np.asarray(samples).reshape(maps.shape[0], -1)
    if dcf is not None:
        s = s * np.asarray(dcf).reshape(1, -1)
    return np.sum(np.conj(maps) * plan.adjoint(s), axis=0)


# --------------------------------------------------------------------------
# forward operators on Casorati matrices

class RadialSenseOperator:
    """Multi-coil radial encoding of a dynamic series.

    ``forward`` maps a Casorati matrix (H*W x n) to k-space shaped
    (n, coils, spokes, readout); ``adjoint`` is its exact adjoint.
    """

    def __init__(self, coil_maps, traj: RadialTrajectory, oversamp=2.0, width=4,
                 chunk=8):
        self.coil_maps = np.asarray(coil_maps, dtype=np.complex128)
        self.n_coils, h, w = self.coil_maps.shape
        self.image_shape = (h, w)
        self.traj = traj
        self.n_frames = traj.n_frames
        self.chunk = chunk
        self.plans = [NufftPlan((h, w), traj.frame_coords(t), oversamp, width)
                      for t in range(traj.n_frames)]
        self.kshape = (traj.spokes_per_frame, traj.n_readout)
        self._dcf = None

    @property
    def data_shape(self):
        return (self.n_frames, self.n_coils) + self.kshape

    @property
    def sensitivity_energy(self):
        return np.sum(np.abs(self.coil_maps) ** 2, axis=0)

    def _check(self, x):
        m = self.image_shape[0] * self.image_shape[1]
        if x.shape != (m, self.n_frames):
            raise DimensionError(f"expected Casorati {(m, self.n_frames)}, got {x.shape}")

    def _forward_chunk(self, frames, t0, t1):
        p0 = self.plans[t0]
        spec = _to_spectrum(self.coil_maps[None] * (frames * p0.deapod)[:, None],
                            p0.grid_shape)
        out = np.empty((t1 - t0, self.n_coils) + self.kshape, dtype=np.complex128)
        for i, t in enumerate(range(t0, t1)):
            p = self.plans[t]
            out[i] = (p.scale * p.interpolate(spec[i])).reshape((self.n_coils,) + self.kshape)
        return out

    def _adjoint_chunk(self, y, t0, t1):
        p0 = self.plans[t0]
        g = np.empty((t1 - t0, self.n_coils) + p0.grid_shape, dtype=np.complex128)
        for i, t in enumerate(range(t0, t1)):
            g[i] = self.plans[t].spread(y[i].reshape(self.n_coils, -1))
        img = _from_spectrum(g, self.image_shape)
        img = np.einsum("chw,tchw->thw", np.conj(self.coil_maps), img)
        return (p0.scale * p0.deapod) * img

    def forward(self, x):
        x = np.asarray(x)
        self._check(x)
        frames = frames_of(x, *self.image_shape)
        out = np.empty(self.data_shape, dtype=np.complex128)
        for t0 in range(0, self.n_frames, self.chunk):
            t1 = min(t0 + self.chunk, self.n_frames)
            out[t0:t1] = self._forward_chunk(frames[t0:t1], t0, t1)
        return out

    def adjoint(self, y, dcf=None):
        y = np.asarray(y)
        if y.shape != self.data_shape:
            raise DimensionError(f"expected k-space {self.data_shape}, got {y.shape}")
        frames = np.empty((self.n_frames,) + self.image_shape, dtype=np.complex128)
        for t0 in range(0, self.n_frames, self.chunk):
            t1 = min(t0 + self.chunk, self.n_frames)
            yc = y[t0:t1]
            if dcf is not None:
                yc = yc * dcf[t0:t1, None]
            frames[t0:t1] = self._adjoint_chunk(yc, t0, t1)
        return casorati_of(frames)

    def normal(self, x):
        """``A^H A x`` computed chunk by chunk without storing k-space."""
        x = np.asarray(x)
        self._check(x)
        frames = frames_of(x, *self.image_shape)
        out = np.empty(frames.shape, dtype=np.complex128)
        for t0 in range(0, self.n_frames, self.chunk):
            t1 = min(t0 + self.chunk, self.n_frames)
            y = self._forward_chunk(frames[t0:t1], t0, t1)
            out[t0:t1] = self._adjoint_chunk(y, t0, t1)
        return casorati_of(out)

    @property
    def dcf(self):
        if self._dcf is None:
            self._dcf = radial_dcf(self.traj, self.image_shape)
        return self._dcf

    def gridding(self, y):
        """Zero-filled, density-compensated, sensitivity-normalized recon."""
        img = self.adjoint(y, dcf=self.dcf)
        e = self.sensitivity_energy.ravel()
        return img / np.maximum(e, 1e-12)[:, None]


class CartesianSenseOperator:
    """Multi-coil Cartesian encoding with an optional per-frame sampling mask.

    k-space shape is (n, coils, H, W); the transform is the orthonormal
    centered FFT.
    """

    def __init__(self, coil_maps, n_frames, mask=None):
        self.coil_maps = np.asarray(coil_maps, dtype=np.complex128)
        self.n_coils, h, w = self.coil_maps.shape
        self.image_shape = (h, w)
        self.n_frames = n_frames
        if mask is None:
            mask = np.ones((n_frames, h, w), dtype=bool)
        self.mask = np.broadcast_to(np.asarray(mask, dtype=bool), (n_frames, h, w))

    @property
    def data_shape(self):
        return (self.n_frames, self.n_coils) + self.image_shape

    @property
    def sensitivity_energy(self):
        return np.sum(np.abs(self.coil_maps) ** 2, axis=0)

    def forward(self, x):
        frames = frames_of(np.asarray(x), *self.image_shape)
        k = fft2_centered(self.coil_maps[None] * frames[:, None])
        return k * self.mask[:, None]

    def adjoint(self, y, dcf=None):
        y = np.asarray(y) * self.mask[:, None]
        if dcf is not None:
            y = y * dcf
        img = fft2_centered(y, inverse=True)
        return casorati_of(np.sum(np.conj(self.coil_maps)[None] * img, axis=1))

    def normal(self, x):
        return self.adjoint(self.forward(x))

    def gridding(self, y):
        e = self.sensitivity_energy.ravel()
        return self.adjoint(y) / np.maximum(e, 1e-12)[:, None]


# --------------------------------------------------------------------------
# data containers and simulation

@dataclass
class KSpaceData:
    data: np.ndarray                    # (n_frames, coils, spokes, readout)
    trajectory: RadialTrajectory
    image_shape: tuple
    noise_sigma: float = 0.0
    coil_compression: np.ndarray | None = None   # (source coils, virtual coils)

    @property
    def n_coils(self):
        return self.data.shape[1]


@dataclass
class NavigatorMatrix:
    data: np.ndarray                    # (rows, n_frames) complex
    spoke: np.ndarray                   # row -> navigator spoke index
    position: np.ndarray                # row -> readout position, pixels from center
    coil: np.ndarray                    # row -> coil index
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self):
        return self.data.shape[1]


def acquire(x, coil_maps, traj: RadialTrajectory, noise_sigma=0.0, seed=0,
            operator=None) -> KSpaceData:
    """Noisy multi-coil radial k-space ``Y = A(X) + N``.

    ``noise_sigma`` is the per-sample standard deviation of circular complex
    Gaussian noise (``E|n|^2 = noise_sigma^2``).
    """
    op = operator or RadialSenseOperator(coil_maps, traj)
    y = op.forward(x)
    if noise_sigma > 0:
        y = y + complex_normal(make_rng(seed), y.shape, noise_sigma)
    return KSpaceData(y, traj, op.image_shape, float(noise_sigma))


def extract_navigators(kdata: KSpaceData, threshold=0.05) -> NavigatorMatrix:
    """Navigator projections ``Z = P X`` from spokes 0 and 1 of every frame.

    The readout of each navigator spoke is inverted with a centered 1-D DFT,
    giving the coil-weighted projection of the frame onto the x axis (spoke 0)
    or the y axis (spoke 1). Readout positions whose coil-combined RMS
    (over frames) falls below ``threshold`` times the largest are dropped.
    """
    y = kdata.data[:, :, :N_NAVIGATORS, :]
    n, c, s, r = y.shape
    h, w = kdata.image_shape
    scale = 1.0 / np.sqrt(h * w)
    proj = scipy.fft.fftshift(
        scipy.fft.fft(scipy.fft.ifftshift(y, axes=-1), axis=-1, workers=FFT_WORKERS),
        axes=-1) / (scale * r)
    energy = np.sqrt(np.sum(np.mean(np.abs(proj) ** 2, axis=0), axis=0))   # (spokes, r)
    keep = energy >= threshold * energy.max()
    rows, spokes, positions, coils = [], [], [], []
    for sp in range(s):
        for p in np.flatnonzero(keep[sp]):
            for ci in range(c):
                rows.append(proj[:, ci, sp, p])
                spokes.append(sp)
                positions.append(p - r // 2)
                coils.append(ci)
    if rows:
        z = np.stack(rows)
    else:
        z = np.zeros((0, n), dtype=np.complex128)
    return NavigatorMatrix(z, np.array(spokes, dtype=np.int64),
                           np.array(positions, dtype=np.int64),
                           np.array(coils, dtype=np.int64),
                           {"threshold": threshold})


def coil_compression_matrix(kdata: KSpaceData, target_coils: int):
    """Top principal directions of the coil-by-sample matrix.

    Returns ``(U, eigvals)`` with ``U`` shaped (coils, target) and all
    eigenvalues of the coil covariance in decreasing order.
    """
    c = kdata.n_coils
    if not 1 <= target_coils <= c:
        raise DimensionError(f"cannot compress {c} coils to {target_coils}")
    d = np.moveaxis(kdata.data, 1, 0).reshape(c, -1)
    cov = d @ d.conj().T
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    # fix the phase of each eigenvector so the output is deterministic
    piv = np.argmax(np.abs(evecs), axis=0)
    ph = evecs[piv, np.arange(c)]
    evecs = evecs * (np.abs(ph) / ph)[None, :]
    return evecs[:, :target_coils], evals


def compress_maps(coil_maps, u):
    """Virtual coil sensitivities ``s'_k = sum_c conj(U[c, k]) s_c``."""
    return np.tensordot(np.conj(u).T, np.asarray(coil_maps), axes=1)


def pca_compress_coils(kdata: KSpaceData, target_coils: int) -> KSpaceData:
    """Project the coil dimension onto its top ``target_coils`` principal
    components. The (source x target) projection is kept on the result so
    matching virtual coil maps can be formed with ``compress_maps``."""
    u, _ = coil_compression_matrix(kdata, target_coils)
    out = np.tensordot(np.conj(u).T, np.moveaxis(kdata.data, 1, 0), axes=1)
    prev = kdata.coil_compression
    total = u if prev is None else prev @ u
    return KSpaceData(np.ascontiguousarray(np.moveaxis(out, 0, 1)), kdata.trajectory,
                      kdata.image_shape, kdata.noise_sigma, total)


def retained_energy(kdata: KSpaceData, target_coils: int) -> float:
    _, evals = coil_compression_matrix(kdata, target_coils)
    return float(evals[:target_coils].sum() / evals.sum())
