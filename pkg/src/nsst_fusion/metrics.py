"""Objective fusion-quality indices.

All functions take images on the 0-255 scale (``GrayImage`` or 2-D arrays)
and return Python floats. Higher is better for every index.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import convolve, gaussian_filter

from .errors import IncompatiblePairError, InvalidImageError
from .image import GrayImage

__all__ = [
    "MetricsReport",
    "avg_gradient",
    "edge_intensity",
    "spatial_frequency",
    "scd",
    "ms_ssim",
    "ms_ssim_pair",
    "qabf",
    "piella",
    "report",
]

MS_SSIM_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])
SSIM_K1, SSIM_K2, SSIM_RANGE = 0.01, 0.03, 255.0
SSIM_SIGMA = 1.5
PIELLA_WINDOW = 8

# Xydeas-Petrovic sigmoid constants; the gains are set so that perfect
# strength and orientation preservation score exactly 1.
QABF_KG, QABF_DG = -15.0, 0.5
QABF_KA, QABF_DA = -22.0, 0.8
QABF_TG = 1.0 + np.exp(QABF_KG * (1.0 - QABF_DG))
QABF_TA = 1.0 + np.exp(QABF_KA * (1.0 - QABF_DA))

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T.copy()


@dataclass
class MetricsReport:
    qabf: float
    scd: float
    ms_ssim: float
    ag: float
    ei: float
    q: float
    qw: float
    qe: float
    sf: float

    def to_dict(self, decimals: int | None = None) -> dict:
        d = asdict(self)
        if decimals is not None:
            d = {k: round(float(v), decimals) for k, v in d.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(decimals=6))

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _arr(img) -> np.ndarray:
    data = img.data if isinstance(img, GrayImage) else img
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidImageError(f"expected a 2-D image, got shape {arr.shape}")
    return arr


def _same_shape(*arrs: np.ndarray) -> None:
    if len({a.shape for a in arrs}) != 1:
        raise IncompatiblePairError(f"images differ in shape: {[a.shape for a in arrs]}")


def _sobel(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # correlation with the kernel, replicate borders
    sx = convolve(f, _SOBEL_X[::-1, ::-1], mode="nearest")
    sy = convolve(f, _SOBEL_Y[::-1, ::-1], mode="nearest")
    return sx, sy


def avg_gradient(f) -> float:
    f = _arr(f)
    gx = f[:-1, 1:] - f[:-1, :-1]
    gy = f[1:, :-1] - f[:-1, :-1]
    return float(np.mean(np.sqrt((gx * gx + gy * gy) / 2.0)))


def edge_intensity(f) -> float:
    sx, sy = _sobel(_arr(f))
    return float(np.mean(np.hypot(sx, sy)))


def spatial_frequency(f) -> float:
    f = _arr(f)
    rf2 = np.mean(np.diff(f, axis=1) ** 2)
    cf2 = np.mean(np.diff(f, axis=0) ** 2)
    return float(np.sqrt(rf2 + cf2))


def _corr(x: np.ndarray, y: np.ndarray) -> float:
    x = x - x.mean()
    y = y - y.mean()
    den = np.sqrt(np.sum(x * x) * np.sum(y * y))
    if den == 0:
        return 0.0
    return float(np.sum(x * y) / den)


def scd(a, b, f) -> float:
    """Sum of correlations between difference images and sources.

    A zero-variance operand contributes 0 to its term.
    """
    a, b, f = _arr(a), _arr(b), _arr(f)
    _same_shape(a, b, f)
    return _corr(f - b, a) + _corr(f - a, b)


def _ssim_components(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Mean SSIM and mean contrast-structure term over the image."""
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    # truncate so the window is 11x11
    blur = lambda z: gaussian_filter(z, SSIM_SIGMA, mode="reflect", truncate=5.0 / SSIM_SIGMA)  # noqa: E731
    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _downsample(z: np.ndarray) -> np.ndarray:
    h, w = (z.shape[0] // 2) * 2, (z.shape[1] // 2) * 2
    z = z[:h, :w]
    return 0.25 * (z[0::2, 0::2] + z[1::2, 0::2] + z[0::2, 1::2] + z[1::2, 1::2])


def _signed_pow(x: float, p: float) -> float:
    return float(np.sign(x) * np.abs(x) ** p)


def ms_ssim_pair(x, y) -> float:
    """Five-scale MS-SSIM between two images (fewer scales for small inputs).

    Scales are used while the smaller side stays >= 2 pixels; the weights of
    the retained scales are renormalized to sum to one.
    """
    x, y = _arr(x), _arr(y)
    _same_shape(x, y)
    side = min(x.shape)
    if side < 2:
        raise InvalidImageError(f"image {x.shape} too small for MS-SSIM")
    n_scales = 1
    while n_scales < len(MS_SSIM_WEIGHTS) and side // 2**n_scales >= 2:
        n_scales += 1
    weights = MS_SSIM_WEIGHTS[:n_scales] / MS_SSIM_WEIGHTS[:n_scales].sum()
    value = 1.0
    for s in range(n_scales):
        full, cs = _ssim_components(x, y)
        if s == n_scales - 1:
            # luminance enters only at the coarsest scale
            value *= _signed_pow(full, weights[s])
        else:
            value *= _signed_pow(cs, weights[s])
            x, y = _downsample(x), _downsample(y)
    return float(np.clip(value, -1.0, 1.0))


def ms_ssim(a, b, f) -> float:
    return 0.5 * (ms_ssim_pair(a, f) + ms_ssim_pair(b, f))


def _edge_maps(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sx, sy = _sobel(f)
    g = np.hypot(sx, sy)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(sx == 0, np.pi / 2, np.arctan(sy / np.where(sx == 0, 1.0, sx)))
    return g, alpha


def _preservation(g_src, a_src, g_f, a_f) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(g_src > g_f, g_f / g_src, g_src / g_f)
    ratio = np.where((g_src == 0) & (g_f == 0), 1.0, ratio)
    orient = 1.0 - np.abs(a_src - a_f) / (np.pi / 2)
    qg = QABF_TG / (1.0 + np.exp(QABF_KG * (ratio - QABF_DG)))
    qa = QABF_TA / (1.0 + np.exp(QABF_KA * (orient - QABF_DA)))
    return qg * qa


def qabf(a, b, f) -> float:
    """Edge-strength weighted preservation of Sobel edges in the fused image."""
    a, b, f = _arr(a), _arr(b), _arr(f)
    _same_shape(a, b, f)
    ga, aa = _edge_maps(a)
    gb, ab = _edge_maps(b)
    gf, af = _edge_maps(f)
    den = np.sum(ga + gb)
    if den == 0:
        return 0.0
    num = np.sum(_preservation(ga, aa, gf, af) * ga + _preservation(gb, ab, gf, af) * gb)
    return float(np.clip(num / den, 0.0, 1.0))


def _window_stats(x: np.ndarray, y: np.ndarray, size: int):
    """Means, variances and covariance over every fully contained window.

    Deviations are taken from each window's own mean so flat windows give
    exactly zero variance.
    """
    wx = sliding_window_view(x, (size, size))
    wy = sliding_window_view(y, (size, size))
    mx = wx.mean(axis=(-2, -1))
    my = wy.mean(axis=(-2, -1))
    dx = wx - mx[..., None, None]
    dy = wy - my[..., None, None]
    vx = np.mean(dx * dx, axis=(-2, -1))
    vy = np.mean(dy * dy, axis=(-2, -1))
    cxy = np.mean(dx * dy, axis=(-2, -1))
    return mx, my, vx, vy, cxy


def _uiqi_map(x: np.ndarray, y: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Local universal quality index and the local variance of ``x``.

    Degenerate windows: both variances zero gives the mean-similarity term
    alone; both means and variances zero gives 1.
    """
    mx, my, vx, vy, cxy = _window_stats(x, y, size)
    var_sum = vx + vy
    mean_sq = mx * mx + my * my
    with np.errstate(divide="ignore", invalid="ignore"):
        full = 4.0 * cxy * mx * my / (var_sum * mean_sq)
        lum_only = 2.0 * mx * my / mean_sq
        struct_only = 2.0 * cxy / var_sum
    q = np.where(var_sum > 0, np.where(mean_sq > 0, full, struct_only),
                 np.where(mean_sq > 0, lum_only, 1.0))
    return np.clip(q, -1.0, 1.0), vx


def _piella_q_qw(a, b, f, size) -> tuple[float, float]:
    q_af, s_a = _uiqi_map(a, f, size)
    q_bf, s_b = _uiqi_map(b, f, size)
    tot = s_a + s_b
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(tot > 0, s_a / tot, 0.5)
    local = lam * q_af + (1.0 - lam) * q_bf
    q = float(np.mean(local))
    cw = np.maximum(s_a, s_b)
    qw = float(np.sum(cw * local) / cw.sum()) if cw.sum() > 0 else q
    return q, qw


def piella(a, b, f, window: int = PIELLA_WINDOW) -> dict:
    """Piella-Heijmans indices Q, Qw and Qe on sliding ``window`` squares.

    Saliency is the local variance. Qe is Qw of the images times Qw of
    their Sobel magnitude images.
    """
    a, b, f = _arr(a), _arr(b), _arr(f)
    _same_shape(a, b, f)
    size = min(window, *a.shape)
    q, qw = _piella_q_qw(a, b, f, size)
    ea, eb, ef = (np.hypot(*_sobel(z)) for z in (a, b, f))
    _, qw_edge = _piella_q_qw(ea, eb, ef, size)
    return {"q": q, "qw": qw, "qe": qw * qw_edge}


def report(a, b, f) -> MetricsReport:
    a, b, f = _arr(a), _arr(b), _arr(f)
    _same_shape(a, b, f)
    p = piella(a, b, f)
    return MetricsReport(
        qabf=qabf(a, b, f),
        scd=scd(a, b, f),
        ms_ssim=ms_ssim(a, b, f),
        ag=avg_gradient(f),
        ei=edge_intensity(f),
        q=p["q"],
        qw=p["qw"],
        qe=p["qe"],
        sf=spatial_frequency(f),
    )
