"""Fusion rules and the end-to-end two-image pipeline.

Low band: weighted average driven by the difference of normalized regional
energies. High bands: each source's subband gets an MCHMM; variances times
posteriors give per-state detail measures that are compared between the
sources, aggregated with a sigmoid reliability over states into a saliency
map, blended with the soft context, and used for choose-max selection.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .context import ContextWeights, context_field
from .errors import IncompatiblePairError, InvalidParameterError
from .image import GrayImage, check_pair, save_image
from .mchmm import MchmmConfig, MchmmParams, estimate_noise_variance, train
from .nsst import DecompositionSpec, NsstDecomposition, decompose, reconstruct

__all__ = [
    "FusionConfig",
    "SaliencyMaps",
    "FusionResult",
    "regional_energy",
    "normalize_energy",
    "fuse_low",
    "vp",
    "vpm",
    "detail_reliability",
    "multi_state_saliency",
    "activity_measure",
    "fuse_high",
    "fuse_images",
    "fuse_naive",
    "write_diagnostics",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusionConfig:
    decomposition: DecompositionSpec = field(default_factory=DecompositionSpec)
    context_weights: ContextWeights = field(default_factory=ContextWeights)
    mchmm: MchmmConfig = field(default_factory=MchmmConfig)
    alpha: float = 0.5
    low_window: int = 3

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParameterError(f"alpha out of range: {self.alpha}")
        if self.low_window < 1 or self.low_window % 2 == 0:
            raise InvalidParameterError(f"low_window must be odd and >= 1, got {self.low_window}")


@dataclass
class SaliencyMaps:
    """Per-subband intermediate maps for both sources (index 0 = A, 1 = B)."""

    vp: tuple[np.ndarray, np.ndarray]
    vpm: tuple[np.ndarray, np.ndarray]
    sm: tuple[np.ndarray, np.ndarray]
    mh: tuple[np.ndarray, np.ndarray]
    v: tuple[np.ndarray, np.ndarray]


@dataclass
class FusionResult:
    fused: GrayImage
    raw: np.ndarray
    low_weight: np.ndarray
    saliency: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def regional_energy(low, w_size: int = 3) -> np.ndarray:
    """Mean of squared coefficients over a circular ``w_size`` square window."""
    if w_size < 1 or w_size % 2 == 0:
        raise InvalidParameterError(f"window size must be odd, got {w_size}")
    low = np.asarray(low, dtype=np.float64)
    return uniform_filter(low * low, size=w_size, mode="wrap")


def normalize_energy(le) -> np.ndarray:
    le = np.asarray(le, dtype=np.float64)
    lo, hi = le.min(), le.max()
    if hi == lo:
        return np.full_like(le, 0.5)
    return np.clip((le - lo) / (hi - lo), 0.0, 1.0)


def low_weight(low_a, low_b, w_size: int = 3) -> np.ndarray:
    ml_a = normalize_energy(regional_energy(low_a, w_size))
    ml_b = normalize_energy(regional_energy(low_b, w_size))
    return 0.5 + (ml_a - ml_b) / 2.0


def fuse_low(low_a, low_b, w_size: int = 3) -> np.ndarray:
    low_a = np.asarray(low_a, dtype=np.float64)
    low_b = np.asarray(low_b, dtype=np.float64)
    if low_a.shape != low_b.shape:
        raise IncompatiblePairError(f"low bands differ in shape: {low_a.shape} vs {low_b.shape}")
    w = low_weight(low_a, low_b, w_size)
    return w * low_a + (1.0 - w) * low_b


def vp(params: MchmmParams, posterior: np.ndarray) -> np.ndarray:
    """Per-state detail measure: state variance times state posterior."""
    return params.variance * posterior


def vpm(vp_a: np.ndarray, vp_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Soft per-state comparison of two detail measures.

    The threshold for state ``m`` is the subband mean of ``|vp_a - vp_b|``
    for that state; differences beyond it saturate to 0 or 1.
    """
    diff = np.asarray(vp_a, dtype=np.float64) - np.asarray(vp_b, dtype=np.float64)
    tau = np.mean(np.abs(diff), axis=(-2, -1), keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = 0.5 + 0.5 * diff / tau
    out = np.where(diff >= tau, 1.0, np.where(-diff >= tau, 0.0, mid))
    out = np.where(tau == 0, 0.5, out)
    return out, 1.0 - out


def detail_reliability(m, n: int):
    u = np.asarray(m, dtype=np.float64) - (n - 1) / 2.0
    out = 1.0 / (1.0 + np.exp(-2.0 * u))
    return out if out.ndim else float(out)


def multi_state_saliency(vpm_maps: np.ndarray, n: int | None = None) -> np.ndarray:
    vpm_maps = np.asarray(vpm_maps, dtype=np.float64)
    n = vpm_maps.shape[0] if n is None else n
    d = detail_reliability(np.arange(n), n).reshape((n,) + (1,) * (vpm_maps.ndim - 1))
    return np.sum(vpm_maps * d, axis=0) / np.sum(d)


def activity_measure(sm, v, alpha: float = 0.5) -> np.ndarray:
    return alpha * np.asarray(sm, dtype=np.float64) + (1.0 - alpha) * np.asarray(v, dtype=np.float64)


def fuse_high(c_a, c_b, mh_a, mh_b) -> np.ndarray:
    """Choose-max selection; ties go to ``c_a``."""
    return np.where(np.asarray(mh_a) >= np.asarray(mh_b), c_a, c_b)


def _model_subband(dec: NsstDecomposition, j: int, k: int, cfg: FusionConfig, noise_var: float):
    ctx = context_field(dec, j, k, cfg.context_weights)
    res = train(dec.highs[j][k], ctx.v, cfg.mchmm, radius=cfg.mchmm.radius_for(j), noise_variance=noise_var)
    return ctx.v, res


def _noise_for(dec: NsstDecomposition, cfg: FusionConfig) -> float:
    if cfg.mchmm.noise_variance is not None:
        return cfg.mchmm.noise_variance
    return estimate_noise_variance(list(dec.highs[-1]))


def fuse_images(a: GrayImage, b: GrayImage, cfg: FusionConfig | None = None, jobs: int = 1,
                keep_maps: bool = True) -> FusionResult:
    """Fuse two registered images (A: infrared, B: visible)."""
    cfg = cfg or FusionConfig()
    check_pair(a, b)
    t0 = time.perf_counter()
    dec_a = decompose(a, cfg.decomposition)
    dec_b = decompose(b, cfg.decomposition)
    timings = {"decompose": time.perf_counter() - t0}

    t0 = time.perf_counter()
    w = low_weight(dec_a.low, dec_b.low, cfg.low_window)
    low = w * dec_a.low + (1.0 - w) * dec_b.low
    timings["low"] = time.perf_counter() - t0

    noise = (_noise_for(dec_a, cfg), _noise_for(dec_b, cfg))
    tasks = [(i, j, k) for i in (0, 1) for j, k, _ in dec_a.iter_highs()]
    decs = (dec_a, dec_b)

    def run(task):
        i, j, k = task
        return task, _model_subband(decs[i], j, k, cfg, noise[i])

    t0 = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            models = dict(pool.map(run, tasks))
    else:
        models = dict(map(run, tasks))
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    n = cfg.mchmm.n_states
    highs = [[None] * len(bands) for bands in dec_a.highs]
    saliency, iterations = {}, {}
    for j, k, c_a in dec_a.iter_highs():
        c_b = dec_b.highs[j][k]
        (v_a, res_a), (v_b, res_b) = models[(0, j, k)], models[(1, j, k)]
        vp_a, vp_b = vp(res_a.params, res_a.posterior), vp(res_b.params, res_b.posterior)
        vpm_a, vpm_b = vpm(vp_a, vp_b)
        sm_a, sm_b = multi_state_saliency(vpm_a, n), multi_state_saliency(vpm_b, n)
        mh_a = activity_measure(sm_a, v_a, cfg.alpha)
        mh_b = activity_measure(sm_b, v_b, cfg.alpha)
        highs[j][k] = fuse_high(c_a, c_b, mh_a, mh_b)
        iterations[(j, k)] = {
            "A": {"global": res_a.global_iters, "local": res_a.params.iterations},
            "B": {"global": res_b.global_iters, "local": res_b.params.iterations},
        }
        if keep_maps:
            saliency[(j, k)] = SaliencyMaps((vp_a, vp_b), (vpm_a, vpm_b), (sm_a, sm_b),
                                            (mh_a, mh_b), (v_a, v_b))
    fused_dec = NsstDecomposition(cfg.decomposition, low, highs)
    raw = reconstruct(fused_dec)
    timings["select_and_reconstruct"] = time.perf_counter() - t0
    log.info("fused %dx%d pair in %.2fs", a.width, a.height, sum(timings.values()))
    return FusionResult(GrayImage.from_array(raw, clip=True), raw, w, saliency, iterations, timings)


def fuse_naive(a: GrayImage, b: GrayImage, spec: DecompositionSpec | None = None) -> GrayImage:
    """Baseline: average the low bands, pick the larger-magnitude high coefficient."""
    check_pair(a, b)
    spec = spec or DecompositionSpec()
    dec_a, dec_b = decompose(a, spec), decompose(b, spec)
    low = 0.5 * (dec_a.low + dec_b.low)
    highs = [[np.where(np.abs(ca) >= np.abs(cb), ca, cb) for ca, cb in zip(ba, bb)]
             for ba, bb in zip(dec_a.highs, dec_b.highs)]
    return GrayImage.from_array(reconstruct(NsstDecomposition(spec, low, highs)), clip=True)


def _config_echo(cfg: FusionConfig) -> dict:
    out = asdict(cfg)
    out["decomposition"]["directions_per_scale"] = list(cfg.decomposition.directions_per_scale)
    return out


def write_diagnostics(result: FusionResult, cfg: FusionConfig, directory) -> Path:
    """Dump V, SM and MH maps (scaled by 255) as PGM plus a JSON run summary."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for (j, k), maps in sorted(result.saliency.items()):
        for name in ("v", "sm", "mh"):
            for tag, arr in zip("AB", getattr(maps, name)):
                save_image(255.0 * np.clip(arr, 0, 1), directory / f"{name}_{tag}_s{j}_d{k}.pgm")
    summary = {
        "iterations": {f"s{j}_d{k}": it for (j, k), it in sorted(result.iterations.items())},
        "timings": result.timings,
        "config": _config_echo(cfg),
    }
    path = directory / "summary.json"
    path.write_text(json.dumps(summary, indent=2))
    return path
