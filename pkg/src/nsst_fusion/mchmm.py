"""Multi-state contextual hidden Markov model for one high-frequency subband.

Each coefficient ``C(x, y)`` carries a hidden state ``m`` in ``0..n-1`` and is
modelled as a zero-mean Gaussian with state variance ``var[m, x, y]``. State
probabilities are conditioned on the soft context ``v`` through a
per-coefficient context likelihood. Training runs in two stages:

1. global EM: one mixture shared by the whole subband;
2. localization: window averages of the global posteriors seed per-coefficient
   parameters, which are then refined by local EM over circular windows of
   size ``(2W+1)**2``.

Arrays holding per-state quantities have shape ``(n, H, W)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import uniform_filter

from .errors import InvalidParameterError

__all__ = [
    "MchmmConfig",
    "GlobalParams",
    "MchmmParams",
    "TrainResult",
    "VARIANCE_FLOOR",
    "gaussian_density",
    "estimate_noise_variance",
    "init_global",
    "e_step_global",
    "m_step_global",
    "global_log_likelihood",
    "context_kernel",
    "localize",
    "e_step_local",
    "m_step_local",
    "train",
]

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
_LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class MchmmConfig:
    """Model size and EM controls.

    ``window_radius`` is either one radius for every scale or a sequence
    indexed by scale (coarse to fine).
    """

    n_states: int = 4
    window_radius: Union[int, tuple[int, ...]] = 3
    max_global_iters: int = 20
    max_local_iters: int = 10
    convergence_tol: float = 1e-4
    epsilon: float = 1e-6
    noise_variance: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.window_radius, Sequence):
            object.__setattr__(self, "window_radius", tuple(int(r) for r in self.window_radius))
            radii = self.window_radius
        else:
            radii = (self.window_radius,)
        if self.n_states < 2:
            raise InvalidParameterError(f"n_states must be >= 2, got {self.n_states}")
        if any(r < 1 for r in radii):
            raise InvalidParameterError(f"window radii must be >= 1, got {self.window_radius}")
        if self.max_global_iters < 1 or self.max_local_iters < 1:
            raise InvalidParameterError("iteration caps must be >= 1")
        if not self.convergence_tol > 0:
            raise InvalidParameterError("convergence_tol must be > 0")
        if not self.epsilon > 0:
            raise InvalidParameterError("epsilon must be > 0")
        if self.noise_variance is not None and not self.noise_variance >= 0:
            raise InvalidParameterError("noise_variance must be >= 0")

    def radius_for(self, scale: int) -> int:
        if isinstance(self.window_radius, tuple):
            return self.window_radius[min(scale, len(self.window_radius) - 1)]
        return int(self.window_radius)


@dataclass
class GlobalParams:
    state_prob: np.ndarray  # (n,)
    variance: np.ndarray  # (n,)
    low_signal: bool = False

    @property
    def n_states(self) -> int:
        return self.state_prob.shape[0]


@dataclass
class MchmmParams:
    state_prob: np.ndarray
    variance: np.ndarray
    context_likelihood: np.ndarray
    iterations: int = 0

    @property
    def n_states(self) -> int:
        return self.state_prob.shape[0]


@dataclass
class TrainResult:
    params: MchmmParams
    posterior: np.ndarray
    global_params: GlobalParams
    global_iters: int
    local_iters: int
    log_likelihood: list[float] = field(default_factory=list)


def gaussian_density(c, variance):
    """Zero-mean normal density ``g(c; 0, variance)``."""
    variance = np.asarray(variance, dtype=np.float64)
    if np.any(variance <= 0):
        raise InvalidParameterError("variance must be > 0")
    c = np.asarray(c, dtype=np.float64)
    out = np.exp(-0.5 * c * c / variance) / np.sqrt(2 * np.pi * variance)
    return out if out.ndim else float(out)


def _log_gauss(c2: np.ndarray, variance: np.ndarray) -> np.ndarray:
    return -0.5 * (_LOG_2PI + np.log(variance) + c2 / variance)


def _logsumexp0(logp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max-shifted log-sum-exp over axis 0; also returns the shifted weights."""
    top = np.max(logp, axis=0)
    shift = np.where(np.isfinite(top), top, 0.0)
    weights = np.exp(logp - shift)
    with np.errstate(divide="ignore"):
        total = np.log(np.sum(weights, axis=0)) + shift
    return total, weights


def _normalize_log(logp: np.ndarray) -> np.ndarray:
    """Normalize log-weights over axis 0; all -inf columns become uniform."""
    n = logp.shape[0]
    total, weights = _logsumexp0(logp)
    bad = ~np.isfinite(total)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = weights / np.sum(weights, axis=0)
    if np.any(bad):
        post[:, bad] = 1.0 / n
    return post


def estimate_noise_variance(s) -> float:
    """Robust median estimate ``(median|C| / 0.6745)**2``.

    ``s`` may be one subband or a sequence of subbands, which are pooled.
    """
    if isinstance(s, (list, tuple)):
        vals = np.concatenate([np.abs(np.ravel(b)) for b in s])
    else:
        vals = np.abs(np.ravel(s))
    sigma = np.median(vals) / 0.6745
    return max(float(sigma * sigma), VARIANCE_FLOOR)


def init_global(s, cfg: MchmmConfig, noise_variance: Optional[float] = None) -> GlobalParams:
    """Uniform priors and variances spaced linearly from the noise level.

    When the subband energy does not exceed the noise variance every state
    gets the noise variance and ``low_signal`` is set.
    """
    n = cfg.n_states
    if noise_variance is None:
        noise_variance = cfg.noise_variance
    if noise_variance is None:
        noise_variance = estimate_noise_variance(s)
    floor = max(float(noise_variance), VARIANCE_FLOOR)
    delta2 = float(np.mean(np.asarray(s, dtype=np.float64) ** 2))
    priors = np.full(n, 1.0 / n)
    if 2 * delta2 <= 2 * noise_variance:
        warnings.warn("subband energy at or below noise variance; variances set to noise level",
                      RuntimeWarning, stacklevel=2)
        return GlobalParams(priors, np.full(n, floor), low_signal=True)
    step = (2 * delta2 - 2 * noise_variance) / (n - 1)
    variance = np.maximum(step * np.arange(n) + noise_variance, floor)
    return GlobalParams(priors, variance)


def e_step_global(s, params: GlobalParams) -> np.ndarray:
    c2 = np.asarray(s, dtype=np.float64)[None] ** 2
    var = params.variance.reshape(-1, 1, 1)
    with np.errstate(divide="ignore"):
        logp = np.log(params.state_prob).reshape(-1, 1, 1) + _log_gauss(c2, var)
    return _normalize_log(logp)


def m_step_global(s, posterior: np.ndarray, prev: Optional[GlobalParams] = None) -> GlobalParams:
    c2 = np.asarray(s, dtype=np.float64) ** 2
    n = posterior.shape[0]
    count = c2.size
    priors = posterior.reshape(n, -1).mean(axis=1)
    priors = priors / priors.sum()
    weighted = (posterior * c2[None]).reshape(n, -1).sum(axis=1)
    variance = np.empty(n)
    for m in range(n):
        if priors[m] > 0:
            variance[m] = weighted[m] / (count * priors[m])
        else:
            variance[m] = prev.variance[m] if prev is not None else VARIANCE_FLOOR
    return GlobalParams(priors, np.maximum(variance, VARIANCE_FLOOR))


def global_log_likelihood(s, params: GlobalParams) -> float:
    c2 = np.asarray(s, dtype=np.float64)[None] ** 2
    with np.errstate(divide="ignore"):
        logp = np.log(params.state_prob).reshape(-1, 1, 1) + _log_gauss(
            c2, params.variance.reshape(-1, 1, 1)
        )
    return float(np.sum(_logsumexp0(logp)[0]))


def _window_mean(a: np.ndarray, radius: int) -> np.ndarray:
    """Circular box mean over the last two axes."""
    size = 2 * radius + 1
    sizes = (1,) * (a.ndim - 2) + (size, size)
    return uniform_filter(a, size=sizes, mode="wrap")


def _window_variance(v: np.ndarray, radius: int) -> np.ndarray:
    mean = _window_mean(v, radius)
    return np.maximum(_window_mean(v * v, radius) - mean * mean, 0.0)


def context_kernel(v: np.ndarray, radius: int, epsilon: float) -> np.ndarray:
    """Context weights ``w(i,l)`` for every window, shape ``(H, W, 2r+1, 2r+1)``.

    ``w(i,l) = exp(-(v[i,l] - v[x,y])**2 / (2 var_w(x,y) + eps))`` with
    ``var_w`` the variance of ``v`` inside the circular window centred at
    ``(x, y)``. Depends only on ``v``, so training computes it once.
    """
    v = np.asarray(v, dtype=np.float64)
    size = 2 * radius + 1
    denom = 2.0 * _window_variance(v, radius) + epsilon
    windows = sliding_window_view(np.pad(v, radius, mode="wrap"), (size, size))
    return np.exp(-((windows - v[:, :, None, None]) ** 2) / denom[:, :, None, None])


def _kernel_window_sum(post: np.ndarray, kernel: np.ndarray, radius: int) -> np.ndarray:
    p_pad = np.pad(post, ((0, 0), (radius, radius), (radius, radius)), mode="wrap")
    size = 2 * radius + 1
    return np.einsum("nhwab,hwab->nhw", sliding_window_view(p_pad, (size, size), axis=(1, 2)), kernel)


def _local_update(s, posterior, kernel, radius, prev: Optional[MchmmParams]):
    c2 = np.asarray(s, dtype=np.float64) ** 2
    area = (2 * radius + 1) ** 2
    state_prob = _window_mean(posterior, radius)
    state_prob = np.clip(state_prob, 0.0, None)
    state_prob /= state_prob.sum(axis=0, keepdims=True)
    energy = _window_mean(posterior * c2[None], radius)
    kernel_sum = _kernel_window_sum(posterior, kernel, radius)
    live = state_prob > 0
    safe = np.where(live, state_prob, 1.0)
    variance = energy / safe
    ctx_lik = kernel_sum / (area * safe)
    if prev is not None:
        variance = np.where(live, variance, prev.variance)
        ctx_lik = np.where(live, ctx_lik, prev.context_likelihood)
    else:
        variance = np.where(live, variance, VARIANCE_FLOOR)
        ctx_lik = np.where(live, ctx_lik, 0.0)
    variance = np.maximum(variance, VARIANCE_FLOOR)
    ctx_lik = np.clip(ctx_lik, 0.0, 1.0)
    return state_prob, variance, ctx_lik


def localize(s, posterior_global: np.ndarray, v, cfg: MchmmConfig, radius: Optional[int] = None,
             kernel: Optional[np.ndarray] = None) -> MchmmParams:
    """Seed per-coefficient parameters from the global posterior.

    The global posterior stands in for the context-conditioned posterior
    when forming the first context likelihood. The training counter starts
    at zero.
    """
    radius = cfg.radius_for(0) if radius is None else radius
    if kernel is None:
        kernel = context_kernel(v, radius, cfg.epsilon)
    sp, var, lik = _local_update(s, posterior_global, kernel, radius, None)
    return MchmmParams(sp, var, lik, iterations=0)


def e_step_local(s, params: MchmmParams, v=None) -> np.ndarray:
    """Posterior of each state given the coefficient and its soft context.

    ``v`` only enters through ``params.context_likelihood``, which is already
    evaluated at each coefficient's own context value.
    """
    c2 = np.asarray(s, dtype=np.float64)[None] ** 2
    with np.errstate(divide="ignore"):
        logp = (
            np.log(params.state_prob)
            + np.log(params.context_likelihood)
            + _log_gauss(c2, params.variance)
        )
    return _normalize_log(logp)


def m_step_local(s, posterior: np.ndarray, v, cfg: MchmmConfig, prev: MchmmParams,
                 radius: Optional[int] = None, kernel: Optional[np.ndarray] = None) -> MchmmParams:
    """Window-averaged update of priors, variances and context likelihoods.

    Where a localized prior is zero the previous variance and context
    likelihood are kept. Increments the training counter.
    """
    radius = cfg.radius_for(0) if radius is None else radius
    if kernel is None:
        kernel = context_kernel(v, radius, cfg.epsilon)
    sp, var, lik = _local_update(s, posterior, kernel, radius, prev)
    return MchmmParams(sp, var, lik, iterations=prev.iterations + 1)


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(old))), VARIANCE_FLOOR)
    return float(np.max(np.abs(new - old))) / scale


def train(s, v, cfg: MchmmConfig | None = None, radius: Optional[int] = None,
          noise_variance: Optional[float] = None) -> TrainResult:
    """Full two-stage EM on one subband.

    Returns the final local parameters together with the final
    context-conditioned posterior.
    """
    cfg = cfg or MchmmConfig()
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if s.shape != v.shape:
        raise InvalidParameterError(f"subband {s.shape} and context {v.shape} differ in shape")
    radius = cfg.radius_for(0) if radius is None else radius

    gp = init_global(s, cfg, noise_variance)
    history = [global_log_likelihood(s, gp)]
    post = e_step_global(s, gp)
    g_iters = 0
    for g_iters in range(1, cfg.max_global_iters + 1):
        new = m_step_global(s, post, gp)
        history.append(global_log_likelihood(s, new))
        change = max(_rel_change(new.state_prob, gp.state_prob), _rel_change(new.variance, gp.variance))
        new.low_signal = gp.low_signal
        gp = new
        post = e_step_global(s, gp)
        if change < cfg.convergence_tol:
            break

    kernel = context_kernel(v, radius, cfg.epsilon)
    params = localize(s, post, v, cfg, radius, kernel)
    post = e_step_local(s, params, v)
    l_iters = 0
    for l_iters in range(1, cfg.max_local_iters + 1):
        new = m_step_local(s, post, v, cfg, params, radius, kernel)
        change = max(
            _rel_change(new.state_prob, params.state_prob),
            _rel_change(new.variance, params.variance),
            _rel_change(new.context_likelihood, params.context_likelihood),
        )
        params = new
        post = e_step_local(s, params, v)
        if change < cfg.convergence_tol:
            break
    log.debug("trained subband: %d global, %d local iterations", g_iters, l_iters)
    return TrainResult(params, post, gp, g_iters, l_iters, history)
