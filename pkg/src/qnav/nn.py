"""Two-hidden-layer ReLU Q-network and the Adam optimizer shared by all models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MlpArch:
    input_dim: int = 3
    hidden: tuple[int, int] = (64, 32)
    output_dim: int = 3

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) != 2:
            raise ValueError("exactly two hidden layers are supported")
        if min(self.input_dim, self.output_dim, *self.hidden) < 1:
            raise ValueError(f"all layer widths must be >= 1, got {self}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)


LAYER_NAMES = (("w1", "b1"), ("w2", "b2"), ("w3", "b3"))


@dataclass
class MlpParams:
    """Weights are stored as ``(fan_in, fan_out)`` so ``h = x @ w + b``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for pair in LAYER_NAMES for k in pair}

    def copy(self) -> "MlpParams":
        return MlpParams(**{k: v.copy() for k, v in self.arrays().items()})

    def check(self, arch: MlpArch) -> None:
        widths = arch.widths
        for i, (wn, bn) in enumerate(LAYER_NAMES):
            w, b = getattr(self, wn), getattr(self, bn)
            if w.shape != (widths[i], widths[i + 1]) or b.shape != (widths[i + 1],):
                raise ValueError(f"layer {i + 1} shapes {w.shape}/{b.shape} do not match {arch}")

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays().values())


def init_mlp(arch: MlpArch, rng: np.random.Generator) -> MlpParams:
    widths = arch.widths
    arrays = {}
    for i, (wn, bn) in enumerate(LAYER_NAMES):
        bound = 1.0 / np.sqrt(widths[i])
        arrays[wn] = rng.uniform(-bound, bound, size=(widths[i], widths[i + 1]))
        arrays[bn] = np.zeros(widths[i + 1])
    return MlpParams(**arrays)


def mlp_param_count(arch: MlpArch) -> int:
    w = arch.widths
    return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))


def _forward(x, p: MlpParams):
    z1 = x @ p.w1 + p.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ p.w2 + p.b2
    h2 = np.maximum(z2, 0.0)
    return h2 @ p.w3 + p.b3, (z1, h1, z2, h2)


def _check_input(x, arch: MlpArch) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (arch.input_dim,) or x.ndim > 2:
        raise ValueError(f"input shape {x.shape} does not match input_dim={arch.input_dim}")
    return x


def mlp_forward(x, params: MlpParams, arch: MlpArch) -> np.ndarray:
    """Q-values for one feature vector or a batch of them."""
    x = _check_input(x, arch)
    out, _ = _forward(x, params)
    return out


def mlp_forward_backward(x, params: MlpParams, arch: MlpArch, upstream):
    """Outputs and reverse-mode gradients of ``sum(upstream * outputs)``.

    ReLU's derivative at exactly 0 is taken as 0. Batched inputs have their
    per-sample gradients summed.
    """
    x = _check_input(x, arch)
    upstream = np.asarray(upstream, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x, upstream = x[None, :], upstream.reshape(1, -1)
    if upstream.shape != (x.shape[0], arch.output_dim):
        raise ValueError(f"upstream shape {upstream.shape} does not match outputs")
    out, (z1, h1, z2, h2) = _forward(x, params)
    g3 = upstream
    d_w3 = h2.T @ g3
    d_b3 = g3.sum(axis=0)
    g2 = (g3 @ params.w3.T) * (z2 > 0.0)
    d_w2 = h1.T @ g2
    d_b2 = g2.sum(axis=0)
    g1 = (g2 @ params.w2.T) * (z1 > 0.0)
    d_w1 = x.T @ g1
    d_b1 = g1.sum(axis=0)
    grads = MlpParams(d_w1, d_b1, d_w2, d_b2, d_w3, d_b3)
    return (out[0] if single else out), grads


def mlp_backward(x, params: MlpParams, arch: MlpArch, upstream) -> MlpParams:
    return mlp_forward_backward(x, params, arch, upstream)[1]


class NonFiniteGradientError(FloatingPointError):
    """Raised when an optimizer step sees NaN or inf; parameters are left as they were."""


@dataclass
class OptimizerState:
    lrs: dict[str, float]
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def adam_state(params: dict[str, np.ndarray], lrs: dict[str, float]) -> OptimizerState:
    missing = set(params) - set(lrs)
    if missing:
        raise ValueError(f"no learning rate for parameter groups {sorted(missing)}")
    return OptimizerState(
        lrs=dict(lrs),
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState):
    """Bias-corrected Adam update applied in place to ``params``."""
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient for {k!r} has shape {g.shape}, expected {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in group {k!r}; step rejected")
    state.step += 1
    t = state.step
    c1 = 1.0 - BETA1**t
    c2 = 1.0 - BETA2**t
    for k, g in grads.items():
        m, v = state.m[k], state.v[k]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        params[k] -= state.lrs[k] * (m / c1) / (np.sqrt(v / c2) + EPS)
    return params, state
