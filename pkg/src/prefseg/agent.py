"""The clicking policy: a small convolutional encoder-decoder over
(image ⊕ current mask), sampled with temperature, trained with REINFORCE
from ±1 verdicts. Forward and backward passes are hand-written numpy.

Architecture (fixed): conv 3x3 stride 2 (C+1 -> 16), ReLU; conv 3x3 (16 ->
16), ReLU; nearest-neighbor upsample x2 cropped back to the working grid;
conv 3x3 (16 -> 2) producing one logit per (label, row, col) action. The
working grid is the patch grid, so actions land on patch centers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import Mask, ValidationError, patch_majority_labels

logger = logging.getLogger(__name__)

HIDDEN = 16
KERNEL = 3
GRAD_CLIP_NORM = 5.0
PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


@dataclass(frozen=True)
class AgentState:
    """Input tensor (C+1, H', W'): image channels in [0,1], mask channel in {0,1}."""

    tensor: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=np.float64)
        if t.ndim != 3 or t.shape[0] < 2:
            raise ValidationError(f"state must be (C+1, H', W') with C >= 1, got {t.shape}")
        img, mask = t[:-1], t[-1]
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValidationError("state image channels must lie in [0,1]")
        if not np.isin(mask, (0.0, 1.0)).all():
            raise ValidationError("state mask channel must be 0/1")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "tensor", t)


@dataclass(frozen=True)
class ClickAction:
    row: int  # working-grid coordinates
    col: int
    label: int
    log_prob: float

    def __post_init__(self):
        if self.log_prob > 1e-9:
            raise ValidationError(f"log_prob must be <= 0, got {self.log_prob}")


@dataclass(frozen=True)
class PolicyParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    temperature: float = 1.0
    learning_rate: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValidationError("temperature must be positive")
        for name in PARAM_NAMES:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.isfinite(arr).all():
                raise ValidationError(f"policy parameter {name} contains non-finite values")
            object.__setattr__(self, name, arr)

    @property
    def in_channels(self) -> int:
        return self.w1.shape[1]

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


def make_policy(in_channels: int, seed: int = 0, temperature: float = 1.0,
                learning_rate: float = 1e-3) -> PolicyParams:
    """He-initialized hidden layers; zero final layer so the initial policy is uniform."""
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((HIDDEN, in_channels, KERNEL, KERNEL)) * np.sqrt(
        2.0 / (in_channels * KERNEL * KERNEL))
    w2 = rng.standard_normal((HIDDEN, HIDDEN, KERNEL, KERNEL)) * np.sqrt(
        2.0 / (HIDDEN * KERNEL * KERNEL))
    return PolicyParams(
        w1=w1, b1=np.zeros(HIDDEN),
        w2=w2, b2=np.zeros(HIDDEN),
        w3=np.zeros((2, HIDDEN, KERNEL, KERNEL)), b3=np.zeros(2),
        temperature=temperature, learning_rate=learning_rate, rng_seed=seed,
    )


def build_agent_state(image: np.ndarray, mask: Mask, patch_size: int) -> AgentState:
    """Resize image to the patch grid by block means and stack the mask channel
    (patch-majority) on top."""
    c, h, w = image.shape
    if (h, w) != mask.bits.shape:
        raise ValidationError(f"image grid {(h, w)} != mask grid {mask.bits.shape}")
    gh, gw = h // patch_size, w // patch_size
    img = image.astype(np.float64).reshape(c, gh, patch_size, gw, patch_size).mean(axis=(2, 4))
    mask_chan = patch_majority_labels(mask, patch_size).astype(np.float64)
    return AgentState(np.concatenate([img, mask_chan[None]], axis=0))


# --- conv plumbing (im2col based) --------------------------------------------

def _im2col(xp: np.ndarray, k: int, stride: int) -> tuple[np.ndarray, int, int]:
    c, h, w = xp.shape
    hout = (h - k) // stride + 1
    wout = (w - k) // stride + 1
    cols = np.empty((c, k, k, hout, wout), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, i : i + stride * hout : stride, j : j + stride * wout : stride]
    return cols.reshape(c * k * k, hout * wout), hout, wout


def _col2im(dcols: np.ndarray, xp_shape: tuple[int, int, int], k: int, stride: int,
            hout: int, wout: int) -> np.ndarray:
    dxp = np.zeros(xp_shape)
    d = dcols.reshape(xp_shape[0], k, k, hout, wout)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + stride * hout : stride, j : j + stride * wout : stride] += d[:, i, j]
    return dxp


def _conv_forward(x, w, b, stride):
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols, hout, wout = _im2col(xp, KERNEL, stride)
    out = w.reshape(w.shape[0], -1) @ cols + b[:, None]
    return out.reshape(w.shape[0], hout, wout), (cols, xp.shape, hout, wout)


def _conv_backward(dout, cache, w, stride):
    cols, xp_shape, hout, wout = cache
    dflat = dout.reshape(w.shape[0], -1)
    dw = (dflat @ cols.T).reshape(w.shape)
    db = dflat.sum(axis=1)
    dcols = w.reshape(w.shape[0], -1).T @ dflat
    dxp = _col2im(dcols, xp_shape, KERNEL, stride, hout, wout)
    return dxp[:, 1:-1, 1:-1], dw, db


def _forward(params: PolicyParams, x: np.ndarray):
    h1, c1 = _conv_forward(x, params.w1, params.b1, stride=2)
    a1 = np.maximum(h1, 0.0)
    h2, c2 = _conv_forward(a1, params.w2, params.b2, stride=1)
    a2 = np.maximum(h2, 0.0)
    up_full = np.repeat(np.repeat(a2, 2, axis=1), 2, axis=2)
    hw = x.shape[1:]
    up = up_full[:, : hw[0], : hw[1]]
    z, c3 = _conv_forward(up, params.w3, params.b3, stride=1)
    return z, (h1, c1, h2, c2, up_full.shape, c3, hw)


def _backward(params: PolicyParams, cache, dz: np.ndarray) -> dict[str, np.ndarray]:
    h1, c1, h2, c2, up_full_shape, c3, hw = cache
    dup, dw3, db3 = _conv_backward(dz, c3, params.w3, stride=1)
    dup_full = np.zeros(up_full_shape)
    dup_full[:, : hw[0], : hw[1]] = dup
    da2 = dup_full.reshape(dup_full.shape[0], up_full_shape[1] // 2, 2,
                           up_full_shape[2] // 2, 2).sum(axis=(2, 4))
    dh2 = da2 * (h2 > 0)
    da1, dw2, db2 = _conv_backward(dh2, c2, params.w2, stride=1)
    dh1 = da1 * (h1 > 0)
    _, dw1, db1 = _conv_backward(dh1, c1, params.w1, stride=2)
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "w3": dw3, "b3": db3}


# --- public policy surface ----------------------------------------------------

def policy_forward(params: PolicyParams, state: AgentState) -> np.ndarray:
    """Deterministic logit map (2, H', W') over (label, row, col) actions."""
    if state.tensor.shape[0] != params.in_channels:
        raise ValidationError(
            f"state has {state.tensor.shape[0]} channels, policy expects {params.in_channels}")
    z, _ = _forward(params, state.tensor)
    if not np.isfinite(z).all():
        raise ValidationError("policy produced non-finite logits")
    return z


def _log_softmax(flat: np.ndarray) -> np.ndarray:
    shifted = flat - flat.max()
    return shifted - np.log(np.exp(shifted).sum())


def softmax_policy(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Flattened action distribution softmax(logits / temperature)."""
    logp = _log_softmax(logits.ravel() / temperature)
    return np.exp(logp)


def sample_action(params: PolicyParams, state: AgentState, rng: np.random.Generator,
                  greedy: bool = False) -> ClickAction:
    """Draw one (label, row, col) action; greedy=True takes the argmax instead."""
    logits = policy_forward(params, state)
    flat = logits.ravel() / params.temperature
    logp = _log_softmax(flat)
    if greedy:
        idx = int(np.argmax(flat))
    else:
        cdf = np.cumsum(np.exp(logp))
        idx = min(int(np.searchsorted(cdf, rng.random(), side="right")), flat.size - 1)
    label, row, col = np.unravel_index(idx, logits.shape)
    return ClickAction(row=int(row), col=int(col), label=int(label),
                       log_prob=float(min(logp[idx], 0.0)))


def log_prob_and_grads(params: PolicyParams, state: AgentState,
                       action: ClickAction) -> tuple[float, dict[str, np.ndarray]]:
    """log pi(a|s) under the current params and its gradient wrt every block."""
    z, cache = _forward(params, state.tensor)
    flat = z.ravel() / params.temperature
    logp = _log_softmax(flat)
    idx = int(np.ravel_multi_index((action.label, action.row, action.col), z.shape))
    dflat = -np.exp(logp)
    dflat[idx] += 1.0
    dz = (dflat / params.temperature).reshape(z.shape)
    return float(logp[idx]), _backward(params, cache, dz)


@dataclass
class MovingBaseline:
    """Optional constant moving-average reward baseline (off by default)."""

    value: float = 0.0
    beta: float = 0.9
    initialized: bool = False

    def update(self, reward: float) -> None:
        if not self.initialized:
            self.value = reward
            self.initialized = True
        else:
            self.value = self.beta * self.value + (1.0 - self.beta) * reward


def reinforce_update(params: PolicyParams,
                     trajectory: Sequence[tuple[AgentState, ClickAction, int]],
                     baseline: Optional[MovingBaseline] = None,
                     ) -> tuple[PolicyParams, float]:
    """One episode-end policy-gradient ascent step.

    theta <- theta + lr * sum_t r_t * grad log pi(a_t | s_t), with the summed
    gradient clipped to global L2 norm 5.0. Returns (new params, clipped
    gradient norm); a non-finite gradient skips the step and logs an incident.
    """
    if not trajectory:
        raise ValidationError("reinforce_update needs a non-empty trajectory")
    total = {name: np.zeros_like(getattr(params, name)) for name in PARAM_NAMES}
    for state, action, reward in trajectory:
        if reward not in (1, -1):
            raise ValidationError(f"reward must be +1 or -1, got {reward}")
        advantage = reward - (baseline.value if baseline is not None else 0.0)
        _, grads = log_prob_and_grads(params, state, action)
        for name in PARAM_NAMES:
            total[name] += advantage * grads[name]
    if baseline is not None:
        baseline.update(float(np.mean([r for _, _, r in trajectory])))
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in total.values())))
    if not np.isfinite(norm):
        logger.warning("reinforce_update: non-finite gradient, step skipped")
        return params, float("nan")
    scale = params.learning_rate * (GRAD_CLIP_NORM / norm if norm > GRAD_CLIP_NORM else 1.0)
    updates = {name: getattr(params, name) + scale * total[name] for name in PARAM_NAMES}
    return replace(params, **updates), min(norm, GRAD_CLIP_NORM)


def policy_to_arrays(params: PolicyParams) -> tuple[dict[str, np.ndarray], dict]:
    meta = {"temperature": params.temperature, "learning_rate": params.learning_rate,
            "rng_seed": params.rng_seed}
    return dict(params.blocks()), meta


def policy_from_arrays(arrays: dict[str, np.ndarray], meta: dict) -> PolicyParams:
    return PolicyParams(**{name: arrays[name] for name in PARAM_NAMES},
                        temperature=float(meta["temperature"]),
                        learning_rate=float(meta["learning_rate"]),
                        rng_seed=int(meta["rng_seed"]))
