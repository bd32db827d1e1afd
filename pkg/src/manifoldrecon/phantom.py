"""Synthetic free-breathing, ungated cardiac phantom and coil sensitivities.

Frames are painted from five ellipses (torso, two lungs, myocardium, blood
pool). The heart breathes with one period and beats with another; since the
two periods are not integer multiples of each other, the voxel time profiles
trace out a torus-like two-parameter family.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError
from .numerics import make_rng

SUPERSAMPLE = 4

# (center_x, center_y, semi_x, semi_y, value) in units of the half field of view
TORSO = (0.0, 0.0, 0.86, 0.64, 0.35)
LUNGS = ((-0.45, -0.06, 0.24, 0.42, 0.08), (0.45, -0.06, 0.24, 0.42, 0.08))
HEART_CENTER = (0.04, 0.12)
MYOCARDIUM = (0.23, 0.20, 0.55)   # semi_x, semi_y, value
BLOOD_POOL = (0.15, 0.12, 1.0)


@dataclass
class PhantomConfig:
    height: int = 128
    width: int = 128
    n_frames: int = 200
    cardiac_period_frames: int = 22
    resp_period_frames: int = 85
    cardiac_amplitude: float = 0.15
    resp_amplitude: float = 4.0
    seed: int = 0

    def validate(self):
        if self.height < 8 or self.width < 8:
            raise ConfigError("grid must be at least 8x8")
        if self.n_frames < 1:
            raise ConfigError("n_frames must be positive")
        tc, tr = self.cardiac_period_frames, self.resp_period_frames
        if tc < 2 or tr < 2:
            raise ConfigError("periods must be at least 2 frames")
        if max(tc, tr) % min(tc, tr) == 0:
            raise ConfigError(f"periods {tc} and {tr} are integer multiples")
        if self.cardiac_amplitude < 0 or self.resp_amplitude < 0:
            raise ConfigError("motion amplitudes must be non-negative")
        if self.cardiac_amplitude >= 1:
            raise ConfigError("cardiac_amplitude must be below 1")
        return self

    def to_dict(self):
        return asdict(self)


def _subpixel_grid(h, w):
    """Subpixel sample coordinates (y, x) in pixels relative to the grid center."""
    off = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    ys = (np.arange(h)[:, None] - h // 2 + off[None, :]).ravel()
    xs = (np.arange(w)[:, None] - w // 2 + off[None, :]).ravel()
    return ys[:, None], xs[None, :]


def _inside(ys, xs, cx, cy, ax, ay):
    return ((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2 <= 1.0


def motion_state(cfg: PhantomConfig, t: int):
    """Cardiac radius scale and vertical shift (pixels) at frame ``t``.

    Phases use ``t mod period`` so frames one period apart are bit-identical.
    """
    tc, tr = cfg.cardiac_period_frames, cfg.resp_period_frames
    scale = 1.0 + cfg.cardiac_amplitude * np.sin(2 * np.pi * (t % tc) / tc)
    shift = cfg.resp_amplitude * np.sin(2 * np.pi * (t % tr) / tr)
    return scale, shift


def render_frame(cfg: PhantomConfig, scale: float, shift: float) -> np.ndarray:
    """Rasterize one frame with 4x4 subpixel averaging; values lie in [0, 1]."""
    h, w = cfg.height, cfg.width
    ys, xs = _subpixel_grid(h, w)
    hy, hx = h / 2.0, w / 2.0
    ys = ys - shift
    hi = np.zeros((ys.shape[0], xs.shape[1]))

    def paint(cx, cy, ax, ay, val):
        hi[_inside(ys, xs, cx * hx, cy * hy, ax * hx, ay * hy)] = val

    paint(*TORSO)
    for lung in LUNGS:
        paint(*lung)
    hcx, hcy = HEART_CENTER
    mx, my, mval = MYOCARDIUM
    paint(hcx, hcy, mx * scale, my * scale, mval)
    bx, by, bval = BLOOD_POOL
    paint(hcx, hcy, bx * scale, by * scale, bval)
    return hi.reshape(h, SUPERSAMPLE, w, SUPERSAMPLE).mean(axis=(1, 3))


def generate_phantom(cfg: PhantomConfig | None = None) -> np.ndarray:
    """Casorati matrix (H*W x n_frames, complex128) of the dynamic phantom.

    Column ``t`` is frame ``t`` flattened row-major.
    """
    cfg = (cfg or PhantomConfig()).validate()
    m = cfg.height * cfg.width
    x = np.empty((m, cfg.n_frames), dtype=np.complex128)
    cache = {}
    for t in range(cfg.n_frames):
        key = motion_state(cfg, t)
        if key not in cache:
            cache[key] = render_frame(cfg, *key).ravel()
        x[:, t] = cache[key]
    return x


def frames_of(x: np.ndarray, height: int, width: int) -> np.ndarray:
    """Casorati (m x n) -> frame stack (n x H x W)."""
    return np.ascontiguousarray(x.T).reshape(x.shape[1], height, width)


def casorati_of(frames: np.ndarray) -> np.ndarray:
    """Frame stack (n x H x W) -> Casorati (m x n)."""
    n = frames.shape[0]
    return np.ascontiguousarray(frames.reshape(n, -1).T)


def generate_coil_maps(height: int, width: int, n_coils: int = 8, seed: int = 0) -> np.ndarray:
    """Smooth complex coil sensitivities, shape (n_coils, H, W).

    Each map is a Gaussian magnitude bump centered on a point of the image
    border times a linear phase ramp with a random offset. The set is scaled
    so that the sum of squared magnitudes equals 1 at the grid center.
    """
    if n_coils < 1:
        raise ConfigError("need at least one coil")
    rng = make_rng(seed)
    y = (np.arange(height) - height // 2)[:, None].astype(float)
    x = (np.arange(width) - width // 2)[None, :].astype(float)
    width_px = 0.6 * max(height, width)
    start = rng.uniform(0, 2 * np.pi)
    maps = np.empty((n_coils, height, width), dtype=np.complex128)
    for i in range(n_coils):
        ang = start + 2 * np.pi * i / n_coils
        cy = 0.5 * height * np.sin(ang)
        cx = 0.5 * width * np.cos(ang)
        mag = np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * width_px ** 2))
        # slopes bounded by pi/2 across the field of view
        gy, gx = rng.uniform(-0.5, 0.5, size=2) * np.pi / np.array([height, width])
        phase = rng.uniform(-np.pi, np.pi) + gy * y + gx * x
        maps[i] = mag * np.exp(1j * phase)
    center = np.sum(np.abs(maps[:, height // 2, width // 2]) ** 2)
    maps /= np.sqrt(center)
    return maps
