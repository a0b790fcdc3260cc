"""Non-subsampled shearlet transform (NSST).

A non-subsampled pyramid built from maxflat half-band kernels (a trous
scheme) splits the image into one low band and ``levels`` band-pass
images. Each band-pass image is then split into directional wedges by a
Meyer-windowed shear partition of the frequency plane. Nothing is
decimated, so every subband has the source dimensions.

All filtering is circular (periodic extension) and done by FFT.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    InvalidDecompositionError,
    InvalidSpecError,
    TooSmallError,
    UnsupportedFilterError,
)
from .image import GrayImage

__all__ = [
    "DecompositionSpec",
    "NsstDecomposition",
    "PyramidFilters",
    "build_pyramid_filters",
    "build_shear_filters",
    "decompose",
    "reconstruct",
    "dump_decomposition",
]

MAXFLAT_ORDER = 2


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class DecompositionSpec:
    """Shape of the decomposition.

    ``directions_per_scale`` is ordered coarse to fine, so the default
    ``(4, 8)`` puts 4 wedges on the coarser band-pass scale and 8 on the
    finest.
    """

    levels: int = 2
    directions_per_scale: tuple[int, ...] = (4, 8)
    pyramid_filter: str = "maxflat"

    def __post_init__(self):
        object.__setattr__(self, "directions_per_scale", tuple(int(d) for d in self.directions_per_scale))
        if self.levels < 1:
            raise InvalidSpecError(f"levels must be >= 1, got {self.levels}")
        if len(self.directions_per_scale) != self.levels:
            raise InvalidSpecError(
                f"need {self.levels} direction counts, got {len(self.directions_per_scale)}"
            )
        for d in self.directions_per_scale:
            if not _is_pow2(d):
                raise InvalidSpecError(f"direction count {d} is not a power of two >= 2")

    @property
    def n_highs(self) -> int:
        return sum(self.directions_per_scale)


@dataclass
class NsstDecomposition:
    """One low band plus ``highs[j][k]``, scale ``j`` ordered coarse to fine."""

    spec: DecompositionSpec
    low: np.ndarray
    highs: list[list[np.ndarray]] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.low.shape

    def validate(self) -> None:
        shape = self.low.shape
        if self.low.ndim != 2:
            raise InvalidDecompositionError("low band must be 2-D")
        if len(self.highs) != self.spec.levels:
            raise InvalidDecompositionError(
                f"expected {self.spec.levels} scales, got {len(self.highs)}"
            )
        for j, (bands, k_expected) in enumerate(zip(self.highs, self.spec.directions_per_scale)):
            if len(bands) != k_expected:
                raise InvalidDecompositionError(
                    f"scale {j}: expected {k_expected} directions, got {len(bands)}"
                )
            for k, band in enumerate(bands):
                if np.shape(band) != shape:
                    raise InvalidDecompositionError(
                        f"subband ({j},{k}) has shape {np.shape(band)}, expected {shape}"
                    )

    def map(self, fn) -> "NsstDecomposition":
        """Apply ``fn`` to every subband, returning a new decomposition."""
        return NsstDecomposition(
            self.spec, fn(self.low), [[fn(b) for b in bands] for bands in self.highs]
        )

    def combine(self, other: "NsstDecomposition", fn) -> "NsstDecomposition":
        return NsstDecomposition(
            self.spec,
            fn(self.low, other.low),
            [[fn(a, b) for a, b in zip(ba, bb)] for ba, bb in zip(self.highs, other.highs)],
        )

    def iter_highs(self):
        """Yield ``(j, k, subband)`` over every directional subband."""
        for j, bands in enumerate(self.highs):
            for k, band in enumerate(bands):
                yield j, k, band


class PyramidFilters(NamedTuple):
    """Centered, odd-sized 2-D analysis (h) and synthesis (g) kernels."""

    h0: np.ndarray
    h1: np.ndarray
    g0: np.ndarray
    g1: np.ndarray


def _maxflat_taps(order: int) -> np.ndarray:
    """Zero-phase maxflat half-band lowpass taps of length ``4*order - 1``.

    H(w) = cos^(2N)(w/2) * sum_{k<N} C(N-1+k, k) sin^(2k)(w/2), sampled on a
    grid fine enough that the inverse DFT is exact for this trig polynomial.
    """
    n_grid = 8 * order
    w = 2 * np.pi * np.arange(n_grid) / n_grid
    c2, s2 = np.cos(w / 2) ** 2, np.sin(w / 2) ** 2
    resp = c2**order * sum(comb(order - 1 + k, k) * s2**k for k in range(order))
    taps = np.real(np.fft.ifft(resp))
    half = 2 * order - 1
    out = np.concatenate([taps[-half:], taps[: half + 1]])
    out[np.abs(out) < 1e-15] = 0.0
    return out


def _atrous(kernel: np.ndarray, level: int) -> np.ndarray:
    """Insert ``2**level - 1`` zeros between taps along both axes."""
    step = 2**level
    if step == 1:
        return kernel.copy()
    size = (kernel.shape[0] - 1) * step + 1
    out = np.zeros((size, size))
    out[::step, ::step] = kernel
    return out


def build_pyramid_filters(name: str = "maxflat", level: int = 0) -> PyramidFilters:
    """Kernels of one pyramid stage, a-trous upsampled by ``2**level``.

    The high-pass analysis kernel is the complement of the low-pass
    (``h1 = delta - h0``) and both synthesis kernels are the identity, so
    ``H0*G0 + H1*G1 = 1`` holds exactly at every frequency.
    """
    if name != "maxflat":
        raise UnsupportedFilterError(f"unsupported pyramid filter {name!r}")
    taps = _maxflat_taps(MAXFLAT_ORDER)
    h0 = _atrous(np.outer(taps, taps), level)
    delta = np.zeros_like(h0)
    c = h0.shape[0] // 2
    delta[c, c] = 1.0
    return PyramidFilters(h0=h0, h1=delta - h0, g0=delta.copy(), g1=delta.copy())


def kernel_response(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """DFT of a centered kernel embedded circularly in an array of ``shape``."""
    kh, kw = kernel.shape
    if kh > shape[0] or kw > shape[1]:
        raise TooSmallError(f"kernel {kernel.shape} does not fit in image {shape}")
    buf = np.zeros(shape)
    rows = (np.arange(kh) - kh // 2) % shape[0]
    cols = (np.arange(kw) - kw // 2) % shape[1]
    buf[np.ix_(rows, cols)] = kernel
    return np.fft.fft2(buf)


def _meyer_aux(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)


def _pseudo_angle(shape: tuple[int, int]) -> np.ndarray:
    """Orientation coordinate in [0, 4) built from shear slopes.

    The horizontal cone (|wy| <= |wx|) maps to ``1 + wy/wx`` in [0, 2], the
    vertical cone to ``3 - wx/wy`` in [2, 4]; the two pieces meet on the
    diagonals so the coordinate is continuous and cyclic with period 4.
    """
    wy = np.fft.fftfreq(shape[0])[:, None]
    wx = np.fft.fftfreq(shape[1])[None, :]
    wy, wx = np.broadcast_arrays(wy, wx)
    t = np.zeros(shape)
    horiz = np.abs(wy) <= np.abs(wx)
    horiz_nz = horiz & (wx != 0)
    t[horiz_nz] = 1.0 + wy[horiz_nz] / wx[horiz_nz]
    vert = ~horiz
    t[vert] = 3.0 - wx[vert] / wy[vert]
    return np.mod(t, 4.0)


def _as_shape(size) -> tuple[int, int]:
    if np.isscalar(size):
        return int(size), int(size)
    return int(size[0]), int(size[1])


@lru_cache(maxsize=64)
def _shear_filters_cached(num_directions: int, shape: tuple[int, int]) -> tuple[np.ndarray, ...]:
    t = _pseudo_angle(shape)
    width = 4.0 / num_directions
    neg_r = (-np.arange(shape[0])) % shape[0]
    neg_c = (-np.arange(shape[1])) % shape[1]
    out = []
    for k in range(num_directions):
        d = np.abs(t - k * width)
        d = np.minimum(d, 4.0 - d)
        win = np.where(d < width, np.cos(0.5 * np.pi * _meyer_aux(d / width)) ** 2, 0.0)
        # symmetrize so each wedge has a real impulse response (matters only on Nyquist lines)
        win = 0.5 * (win + win[np.ix_(neg_r, neg_c)])
        win[0, 0] = 1.0 / num_directions
        win.setflags(write=False)
        out.append(win)
    return tuple(out)


def build_shear_filters(num_directions: int, size) -> list[np.ndarray]:
    """Frequency responses of ``num_directions`` directional wedges.

    Returned arrays are in unshifted FFT layout with the given size. Wedge
    ``k`` is centered on pseudo-angle ``4k/K``: for K=4 the wedges are
    centered on the anti-diagonal, horizontal-frequency axis, diagonal and
    vertical-frequency axis. Adjacent windows are Meyer complements, so
    the responses sum to one at every frequency.
    """
    if not _is_pow2(int(num_directions)):
        raise InvalidSpecError(f"direction count {num_directions} is not a power of two >= 2")
    shape = _as_shape(size)
    if min(shape) < 2:
        raise TooSmallError(f"shear filter grid {shape} too small")
    return list(_shear_filters_cached(int(num_directions), shape))


@lru_cache(maxsize=64)
def _pyramid_responses(name: str, level: int, shape: tuple[int, int]):
    f = build_pyramid_filters(name, level)
    return tuple(kernel_response(k, shape) for k in f)


def _check_size(shape: tuple[int, int], spec: DecompositionSpec) -> None:
    support = build_pyramid_filters(spec.pyramid_filter, spec.levels - 1).h0.shape[0]
    if min(shape) < support:
        raise TooSmallError(
            f"image {shape[1]}x{shape[0]} smaller than filter support {support}x{support}"
        )


def decompose(img: GrayImage | np.ndarray, spec: DecompositionSpec | None = None) -> NsstDecomposition:
    spec = spec or DecompositionSpec()
    x = img.data if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    shape = x.shape
    _check_size(shape, spec)

    cur = np.fft.fft2(x)
    fine_to_coarse = []
    for level in range(spec.levels):
        h0, h1, _, _ = _pyramid_responses(spec.pyramid_filter, level, shape)
        band = cur * h1
        cur = cur * h0
        n_dirs = spec.directions_per_scale[spec.levels - 1 - level]
        wedges = build_shear_filters(n_dirs, shape)
        fine_to_coarse.append([np.real(np.fft.ifft2(band * w)) for w in wedges])
    low = np.real(np.fft.ifft2(cur))
    return NsstDecomposition(spec, low, fine_to_coarse[::-1])


def reconstruct(dec: NsstDecomposition) -> np.ndarray:
    """Inverse transform. Returns a plain array; values may leave [0, 255]."""
    dec.validate()
    spec, shape = dec.spec, dec.shape
    cur = np.fft.fft2(dec.low)
    for level in reversed(range(spec.levels)):
        _, _, g0, g1 = _pyramid_responses(spec.pyramid_filter, level, shape)
        bands = dec.highs[spec.levels - 1 - level]
        # wedges partition unity, so the band-pass image is the plain sum
        band = np.fft.fft2(np.sum(bands, axis=0))
        cur = cur * g0 + band * g1
    return np.real(np.fft.ifft2(cur))


def dump_decomposition(dec: NsstDecomposition, directory) -> list[Path]:
    """Write each subband as raw little-endian float32 plus a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    h, w = dec.shape
    written = []
    entries = [("low", None, None, dec.low)] + [
        (f"s{j}_d{k}", j, k, band) for j, k, band in dec.iter_highs()
    ]
    for stem, j, k, band in entries:
        raw = directory / f"{stem}.f32"
        band.astype("<f4").tofile(raw)
        meta = {"scale": j, "direction": k, "width": w, "height": h}
        (directory / f"{stem}.json").write_text(json.dumps(meta))
        written.append(raw)
    return written
