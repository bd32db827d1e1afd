"""Image-quality metrics for dynamic reconstructions: SER, SSIM, HFEN.

All three compare magnitude images. ``evaluate`` scores every frame of a
Casorati pair and summarizes with mean and standard deviation over frames.
"""

from __future__ import annotations

from dataclasses import dataclass
import csv
import io

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, DimensionError
from .phantom import frames_of

SER_CAP_DB = 300.0


def _pair(ref, rec):
    ref = np.abs(np.asarray(ref))
    rec = np.abs(np.asarray(rec))
    if ref.shape != rec.shape:
        raise DimensionError(f"shape mismatch {ref.shape} vs {rec.shape}")
    return ref.astype(np.float64), rec.astype(np.float64)


def ser_db(ref, rec, cap=SER_CAP_DB) -> float:
    """Signal-to-error ratio ``20 log10(||ref|| / ||ref - rec||)`` in dB."""
    ref, rec = _pair(ref, rec)
    s = np.linalg.norm(ref)
    if s == 0:
        raise DegenerateInputError("reference image is all zeros")
    e = np.linalg.norm(ref - rec)
    if e == 0:
        return cap
    return min(cap, 20.0 * np.log10(s / e))


def gaussian_window(size=11, sigma=1.5) -> np.ndarray:
    """Normalized 1-D Gaussian taps."""
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, taps):
    half = len(taps) // 2
    out = ndimage.correlate1d(img, taps, axis=0, mode="constant")
    out = ndimage.correlate1d(out, taps, axis=1, mode="constant")
    return out[half:img.shape[0] - half, half:img.shape[1] - half]


def ssim_map(ref, rec, win=11, sigma=1.5, k1=0.01, k2=0.03, data_range=None):
    """Local SSIM over every full ``win x win`` window (no padding)."""
    ref, rec = _pair(ref, rec)
    if min(ref.shape) < win:
        raise DimensionError(f"image smaller than the {win}x{win} window")
    L = float(ref.max()) if data_range is None else float(data_range)
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    g = gaussian_window(win, sigma)
    mx, my = _filter_valid(ref, g), _filter_valid(rec, g)
    sxx = _filter_valid(ref * ref, g) - mx * mx
    syy = _filter_valid(rec * rec, g) - my * my
    sxy = _filter_valid(ref * rec, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(ref, rec, **kw) -> float:
    """Mean local SSIM, Gaussian window 11x11 with sigma 1.5, L = max(ref)."""
    return float(np.mean(ssim_map(ref, rec, **kw)))


def log_kernel(size=15, sigma=1.5) -> np.ndarray:
    """Zero-sum Laplacian-of-Gaussian kernel."""
    x = np.arange(size) - (size - 1) / 2
    xx, yy = np.meshgrid(x, x, indexing="ij")
    r2 = xx ** 2 + yy ** 2
    h = np.exp(-r2 / (2 * sigma ** 2))
    h /= h.sum()
    k = h * (r2 - 2 * sigma ** 2) / sigma ** 4
    return k - k.mean()


def hfen(ref, rec, size=15, sigma=1.5) -> float:
    """``||LoG(rec) - LoG(ref)|| / ||LoG(ref)||`` with symmetric borders."""
    ref, rec = _pair(ref, rec)
    k = log_kernel(size, sigma)
    lr = ndimage.convolve(ref, k, mode="reflect")
    lc = ndimage.convolve(rec, k, mode="reflect")
    den = np.linalg.norm(lr)
    # a flat image leaves only rounding residue of the zero-sum kernel
    if den <= 1e-12 * np.linalg.norm(ref):
        raise DegenerateInputError("reference has no high-frequency content")
    return float(np.linalg.norm(lc - lr) / den)


@dataclass
class MetricReport:
    ser: np.ndarray
    ssim: np.ndarray
    hfen: np.ndarray

    @property
    def n_frames(self):
        return len(self.ser)

    def summary(self) -> dict:
        out = {}
        for name in ("ser", "ssim", "hfen"):
            v = getattr(self, name)
            out[name] = (float(np.mean(v)), float(np.std(v)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "ser_db", "ssim", "hfen"])
        for t in range(self.n_frames):
            w.writerow([t, repr(float(self.ser[t])), repr(float(self.ssim[t])),
                        repr(float(self.hfen[t]))])
        s = self.summary()
        w.writerow(["mean"] + [repr(s[k][0]) for k in ("ser", "ssim", "hfen")])
        w.writerow(["std"] + [repr(s[k][1]) for k in ("ser", "ssim", "hfen")])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricReport":
        rows = list(csv.reader(io.StringIO(text)))
        body = [r for r in rows[1:] if r and r[0] not in ("mean", "std")]
        arr = np.array([[float(v) for v in r[1:]] for r in body]).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])


def evaluate(ref, rec, height, width) -> MetricReport:
    """Per-frame SER / SSIM / HFEN of two Casorati matrices."""
    ref = np.asarray(ref)
    rec = np.asarray(rec)
    if ref.shape != rec.shape:
        raise DimensionError(f"shape mismatch {ref.shape} vs {rec.shape}")
    fr, fc = frames_of(ref, height, width), frames_of(rec, height, width)
    n = fr.shape[0]
    s, q, h = np.empty(n), np.empty(n), np.empty(n)
    for t in range(n):
        s[t] = ser_db(fr[t], fc[t])
        q[t] = ssim(fr[t], fc[t])
        h[t] = hfen(fr[t], fc[t])
    return MetricReport(s, q, h)


def mean_ser(ref, rec, height, width) -> float:
    """Mean per-frame SER only (cheap; used for parameter sweeps)."""
    fr, fc = frames_of(np.asarray(ref), height, width), frames_of(np.asarray(rec), height, width)
    return float(np.mean([ser_db(a, b) for a, b in zip(fr, fc)]))
