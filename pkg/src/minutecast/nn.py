"""From-scratch differentiable stack for the multi-label activity predictor.

Architecture: [dense context blocks | mean-pooled activity embedding] ->
(linear -> batch norm -> ReLU) per hidden layer -> linear -> sigmoid.

Everything is float64 numpy with hand-written backprop. Parameter gradients
are verified against central finite differences (grad_check).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureBatch

# Probabilities are clamped into [P_EPS, 1 - P_EPS] so logs stay finite and a
# threshold of exactly 1.0 can never fire.
P_EPS = 1e-7

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def sigmoid(x: np.ndarray) -> np.ndarray:
    # numerically stable piecewise form
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def embed_mean_pool(ids: np.ndarray, table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of embedding rows over non-PAD ids, (b, k) -> (b, e).

    Returns (pooled, counts); counts is the per-row number of non-PAD ids
    (needed to distribute gradients). All-PAD rows pool to the zero vector.
    """
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise ValueError(
            f"embedding id out of range [0, {table.shape[0] - 1}]: "
            f"{ids.min()}..{ids.max()}"
        )
    nonpad = ids > 0
    counts = nonpad.sum(axis=1)
    # PAD row is all-zero, so a plain gather-and-sum ignores it
    summed = table[ids].sum(axis=1)
    pooled = summed / np.maximum(counts, 1)[:, None]
    return pooled, counts


def embed_mean_pool_backward(
    d_pooled: np.ndarray, ids: np.ndarray, counts: np.ndarray, table_shape
) -> np.ndarray:
    """Scatter 1/count of the pooled gradient back to each contributing row."""
    grad = np.zeros(table_shape)
    b, k = ids.shape
    weights = d_pooled / np.maximum(counts, 1)[:, None]  # (b, e)
    flat_ids = ids.ravel()
    nonpad = flat_ids > 0
    np.add.at(grad, flat_ids[nonpad], np.repeat(weights, k, axis=0)[nonpad])
    grad[0] = 0.0  # PAD row stays frozen
    return grad


@dataclass
class FocalLossConfig:
    """Per-label weights alpha and focusing exponent gamma."""

    alpha: np.ndarray
    gamma: float = 2.0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if np.any(self.alpha < 0) or np.any(self.alpha > 1):
            raise ValueError("alpha entries must lie in [0, 1]")


def focal_loss(
    probs: np.ndarray, targets: np.ndarray, cfg: FocalLossConfig
) -> tuple[float, np.ndarray]:
    """Batch focal loss and its gradient with respect to the logits.

    Per element, with p_t = p if y=1 else 1-p and a_t = alpha if y=1 else
    1-alpha, the term is -a_t * (1 - p_t)^gamma * log(p_t). The loss is the
    sum over labels and batch divided by the batch size. Probabilities are
    clamped to [P_EPS, 1 - P_EPS] before the log.
    """
    if probs.shape != targets.shape:
        raise ValueError(f"shape mismatch: probs {probs.shape} vs targets {targets.shape}")
    if cfg.alpha.shape != (probs.shape[1],):
        raise ValueError(
            f"alpha must have one entry per label: {cfg.alpha.shape} vs n={probs.shape[1]}"
        )
    b = probs.shape[0]
    p = np.clip(probs, P_EPS, 1.0 - P_EPS)
    y = targets.astype(bool)
    p_t = np.where(y, p, 1.0 - p)
    a_t = np.where(y, cfg.alpha[None, :], 1.0 - cfg.alpha[None, :])
    log_pt = np.log(p_t)
    one_minus = 1.0 - p_t
    focus = one_minus**cfg.gamma
    loss = float(-(a_t * focus * log_pt).sum() / b)
    # d(term)/d(logit), derived through p = sigmoid(z); the sign flips for
    # negative labels because dp_t/dz = -p(1-p) there.
    sign = np.where(y, 1.0, -1.0)
    d_term = a_t * (cfg.gamma * p_t * focus * log_pt - one_minus * focus)
    d_logits = sign * d_term / b
    return loss, d_logits


@dataclass
class AdamState:
    """Adam moments per parameter key, with bias correction.

    The update is theta -= lr * m_hat / sqrt(v_hat + eps), matching the
    documented first-step closed form.
    """

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict) -> None:
        for key in params:
            g = grads[key]
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {key!r}")
        self.step += 1
        t = self.step
        for key, theta in params.items():
            g = grads[key]
            m = self.m.setdefault(key, np.zeros_like(theta))
            v = self.v.setdefault(key, np.zeros_like(theta))
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            theta -= self.learning_rate * m_hat / np.sqrt(v_hat + self.eps)


class ActivityPredictor:
    """MLP over concatenated context blocks with a per-label sigmoid head.

    Parameters live in self.params (dict of float64 arrays) keyed
    'embed', 'h{i}.W', 'h{i}.b', 'h{i}.gamma', 'h{i}.beta', 'out.W', 'out.b';
    batch-norm running stats live in self.buffers.
    """

    def __init__(
        self,
        pre_width: int,
        post_width: int,
        n_labels: int,
        hidden=(256, 128),
        embed_dim: int = 16,
        use_embedding: bool = True,
        k: int = 5,
        seed: int = 0,
    ):
        self.pre_width = pre_width
        self.post_width = post_width
        self.n_labels = n_labels
        self.hidden = tuple(hidden)
        self.embed_dim = embed_dim
        self.use_embedding = use_embedding
        self.k = k
        self.mode = "train"
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

        rng = np.random.default_rng(seed)
        if use_embedding:
            emb = rng.normal(0.0, 0.01, size=(n_labels + 1, embed_dim))
            emb[0] = 0.0
            self.params["embed"] = emb
        width = self.input_width
        for i, h in enumerate(self.hidden):
            limit = math.sqrt(6.0 / width)
            self.params[f"h{i}.W"] = rng.uniform(-limit, limit, size=(width, h))
            self.params[f"h{i}.b"] = np.zeros(h)
            self.params[f"h{i}.gamma"] = np.ones(h)
            self.params[f"h{i}.beta"] = np.zeros(h)
            self.buffers[f"h{i}.run_mean"] = np.zeros(h)
            self.buffers[f"h{i}.run_var"] = np.ones(h)
            width = h
        limit = math.sqrt(6.0 / width)
        self.params["out.W"] = rng.uniform(-limit, limit, size=(width, n_labels))
        self.params["out.b"] = np.zeros(n_labels)

    @property
    def input_width(self) -> int:
        return self.pre_width + (self.embed_dim if self.use_embedding else 0) + self.post_width

    def train_mode(self) -> "ActivityPredictor":
        self.mode = "train"
        return self

    def eval_mode(self) -> "ActivityPredictor":
        self.mode = "eval"
        self._cache = None
        return self

    def _assemble_input(self, batch: FeatureBatch):
        parts = [batch.pre]
        pool_ctx = None
        if self.use_embedding:
            if batch.ids is None:
                raise ValueError("model expects last-k ids but the batch has none")
            pooled, counts = embed_mean_pool(batch.ids, self.params["embed"])
            pool_ctx = (batch.ids, counts)
            parts.append(pooled)
        elif batch.ids is not None:
            raise ValueError("batch carries last-k ids but the model was built without them")
        parts.append(batch.post)
        x = np.concatenate(parts, axis=1)
        if x.shape[1] != self.input_width:
            raise ValueError(
                f"input width {x.shape[1]} does not match model width {self.input_width}"
            )
        return x, pool_ctx

    def forward(self, batch: FeatureBatch) -> np.ndarray:
        """Probabilities (b, n_labels), strictly inside (0, 1).

        Train mode uses batch statistics (requires b >= 2) and updates the
        running stats; eval mode is a pure function of params + buffers.
        """
        train = self.mode == "train"
        x, pool_ctx = self._assemble_input(batch)
        b = x.shape[0]
        if b == 0:
            raise ValueError("empty batch")
        if train and b < 2:
            raise ValueError("train-mode forward needs batch size >= 2 for batch norm")
        layer_caches = []
        for i in range(len(self.hidden)):
            W, bias = self.params[f"h{i}.W"], self.params[f"h{i}.b"]
            gamma, beta = self.params[f"h{i}.gamma"], self.params[f"h{i}.beta"]
            z = x @ W + bias
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                self.buffers[f"h{i}.run_mean"] += BN_MOMENTUM * (
                    mu - self.buffers[f"h{i}.run_mean"]
                )
                self.buffers[f"h{i}.run_var"] += BN_MOMENTUM * (
                    var - self.buffers[f"h{i}.run_var"]
                )
            else:
                mu = self.buffers[f"h{i}.run_mean"]
                var = self.buffers[f"h{i}.run_var"]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            z_hat = (z - mu) * inv_std
            pre_act = gamma * z_hat + beta
            out = np.maximum(pre_act, 0.0)
            layer_caches.append((x, z_hat, inv_std, pre_act))
            x = out
        logits = x @ self.params["out.W"] + self.params["out.b"]
        probs = np.clip(sigmoid(logits), P_EPS, 1.0 - P_EPS)
        if train:
            self._cache = {"pool_ctx": pool_ctx, "layers": layer_caches, "head_in": x, "b": b}
        return probs

    def backward(self, d_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given d(loss)/d(logits) from the last train-mode
        forward. The PAD embedding row's gradient is always zero."""
        if self._cache is None:
            raise RuntimeError("backward requires a cached train-mode forward pass")
        cache = self._cache
        grads: dict[str, np.ndarray] = {}
        h = cache["head_in"]
        grads["out.W"] = h.T @ d_logits
        grads["out.b"] = d_logits.sum(axis=0)
        dx = d_logits @ self.params["out.W"].T
        for i in reversed(range(len(self.hidden))):
            x_in, z_hat, inv_std, pre_act = cache["layers"][i]
            dx = np.where(pre_act > 0, dx, 0.0)
            grads[f"h{i}.beta"] = dx.sum(axis=0)
            grads[f"h{i}.gamma"] = (dx * z_hat).sum(axis=0)
            d_zhat = dx * self.params[f"h{i}.gamma"]
            n = dx.shape[0]
            # batch-norm backward through the batch mean and variance
            dz = (
                inv_std
                / n
                * (n * d_zhat - d_zhat.sum(axis=0) - z_hat * (d_zhat * z_hat).sum(axis=0))
            )
            grads[f"h{i}.W"] = x_in.T @ dz
            grads[f"h{i}.b"] = dz.sum(axis=0)
            dx = dz @ self.params[f"h{i}.W"].T
        # split the input gradient back into its blocks
        pre_w = self.pre_width
        if self.use_embedding:
            ids, counts = cache["pool_ctx"]
            d_pooled = dx[:, pre_w : pre_w + self.embed_dim]
            grads["embed"] = embed_mean_pool_backward(
                d_pooled, ids, counts, self.params["embed"].shape
            )
        return grads

    def copy(self) -> "ActivityPredictor":
        dup = ActivityPredictor.__new__(ActivityPredictor)
        dup.__dict__.update(
            {
                k: v
                for k, v in self.__dict__.items()
                if k not in ("params", "buffers", "_cache")
            }
        )
        dup.params = {k: v.copy() for k, v in self.params.items()}
        dup.buffers = {k: v.copy() for k, v in self.buffers.items()}
        dup._cache = None
        return dup

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"param.{k}": v for k, v in self.params.items()}
        out.update({f"buffer.{k}": v for k, v in self.buffers.items()})
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        for k in self.params:
            self.params[k] = np.array(arrays[f"param.{k}"], dtype=np.float64)
        for k in self.buffers:
            self.buffers[k] = np.array(arrays[f"buffer.{k}"], dtype=np.float64)


def grad_check(
    model: ActivityPredictor,
    batch: FeatureBatch,
    targets: np.ndarray,
    cfg: FocalLossConfig,
    h: float = 1e-5,
    n_coords: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-finite-difference
    gradients over >= n_coords randomly sampled parameter coordinates.

    Works on a copy; batch norm runs in train mode with the fixed batch.
    """
    if h <= 0:
        raise ValueError("finite-difference step h must be > 0")
    work = model.copy().train_mode()

    def loss_at() -> float:
        probs = work.forward(batch)
        loss, _ = focal_loss(probs, targets, cfg)
        return loss

    probs = work.forward(batch)
    _, d_logits = focal_loss(probs, targets, cfg)
    analytic = work.backward(d_logits)

    coords = []
    for key in sorted(work.params):
        if key == "embed":
            # PAD row is frozen; skip it when sampling coordinates
            coords.extend(
                (key, i)
                for i in range(work.params[key][1:].size)
            )
        else:
            coords.extend((key, i) for i in range(work.params[key].size))
    rng = np.random.default_rng(seed)
    take = min(n_coords, len(coords))
    picked = [coords[i] for i in rng.choice(len(coords), size=take, replace=False)]

    max_rel = 0.0
    for key, flat_i in picked:
        offset = work.params[key].shape[1] if key == "embed" else 0
        i = flat_i + offset  # embed coordinates skip the PAD row
        theta = work.params[key]
        orig = theta.flat[i]
        theta.flat[i] = orig + h
        loss_plus = loss_at()
        theta.flat[i] = orig - h
        loss_minus = loss_at()
        theta.flat[i] = orig
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        a = analytic[key].flat[i]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        max_rel = max(max_rel, rel)
    return max_rel
