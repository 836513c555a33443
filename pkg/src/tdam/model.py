"""The bag-level survival model.

Pipeline (per bag): linear projection + GELU -> cycle-pad the token grid to a
perfect square and prepend a class token -> Nystrom attention layer ->
multi-scale depthwise-conv positional encoding -> second Nystrom layer ->
two-stage agent attention -> stacked selective-scan blocks over a strided
reordering of the tokens -> gated attention pooling -> 4 bin logits.

Everything runs on the tape engine in :mod:`tdam.autodiff`, so analytic
gradients of the survival loss are available for training and can be checked
against finite differences (:func:`grad_check`).
"""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import Tensor, concat, dwconv2d, linear_recurrence
from .bags import FeatureBag
from .errors import DataError, FormatError, GradError, ShapeError, TruncatedError
from .rng import substream
from .survival import N_BINS, nll_graph

CKPT_MAGIC = b"TDAMCKPT1"
ABLATIONS = ("full", "no_transformer", "no_agent", "no_srmamba")
LN_EPS = 1e-5
INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class ModelConfig:
    d_in: int = 512
    d_model: int = 256
    n_heads: int = 8
    n_agents: int = 64
    n_landmarks: int = 64
    pinv_iters: int = 6
    srmamba_layers: int = 2
    srmamba_rate: int = 5
    ssm_state_dim: int = 16
    dropout: float = 0.25
    n_bins: int = N_BINS
    ablation: str = "full"
    agent_bias_side: int = 8
    pool_hidden: int = 0  # 0 -> d_model // 2

    def validate(self) -> None:
        if self.d_in < 1 or self.d_model < 1:
            raise DataError("d_in and d_model must be positive")
        if self.d_model % self.n_heads != 0:
            raise DataError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.n_bins != N_BINS:
            raise DataError(f"the risk head is fixed at {N_BINS} bins")
        if self.srmamba_rate < 1:
            raise DataError("srmamba_rate must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise DataError("dropout must lie in [0, 1)")
        if self.ablation not in ABLATIONS:
            raise DataError(f"unknown ablation {self.ablation!r}, choose from {ABLATIONS}")
        for name in ("n_agents", "n_landmarks", "pinv_iters", "ssm_state_dim", "agent_bias_side"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if self.srmamba_layers < 0:
            raise DataError("srmamba_layers must be >= 0")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def pool_hidden_dim(self) -> int:
        return self.pool_hidden if self.pool_hidden > 0 else max(self.d_model // 2, 2)

    def with_ablation(self, ablation: str) -> "ModelConfig":
        return ModelConfig(**{**asdict(self), "ablation": ablation})


def config_from_dict(d: dict) -> ModelConfig:
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(d) - known
    if unknown:
        raise DataError(f"unknown model config keys: {sorted(unknown)}")
    cfg = ModelConfig(**d)
    cfg.validate()
    return cfg


class ModelParams:
    """Named parameter tensors; insertion order fixes the checkpoint layout."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def n_params(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def clear_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: Tensor(t.data.copy()) for k, t in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: Tensor(t.data.astype(dtype)) for k, t in self.tensors.items()})

    def check_finite(self) -> None:
        for name, t in self.tensors.items():
            if not np.isfinite(t.data).all():
                raise DataError(f"parameter {name} contains non-finite values")


def _xavier(rng, shape, fan_in, fan_out, dtype):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Xavier-uniform weights, zero biases, unit layernorm gains; the class
    and agent tokens start at N(0, 0.02); the scan's state matrix starts at
    -(1..state_dim) per channel with a small initial discretization step."""
    config.validate()
    rng = substream(seed, "init")
    d, dm = config.d_in, config.d_model
    t: dict[str, Tensor] = {}

    def xav(shape, fan_in, fan_out):
        return Tensor(_xavier(rng, shape, fan_in, fan_out, dtype))

    def zeros(shape):
        return Tensor(np.zeros(shape, dtype=dtype))

    def ones(shape):
        return Tensor(np.ones(shape, dtype=dtype))

    t["proj.W"] = xav((d, dm), d, dm)
    t["proj.b"] = zeros((dm,))
    t["cls_token"] = Tensor((rng.normal(0.0, 0.02, size=(1, dm))).astype(dtype))
    for blk in ("attn1", "attn2"):
        t[f"{blk}.ln_g"] = ones((dm,))
        t[f"{blk}.ln_b"] = zeros((dm,))
        for w in ("Wq", "Wk", "Wv", "Wo"):
            t[f"{blk}.{w}"] = xav((dm, dm), dm, dm)
    for k in (7, 5, 3):
        t[f"ppeg.K{k}"] = xav((k, k, dm), k * k, k * k)
    t["agent.P_agent"] = Tensor(rng.normal(0.0, 0.02, size=(config.n_agents, dm)).astype(dtype))
    t["agent.Wq"] = xav((dm, dm), dm, dm)
    t["agent.Wkv"] = xav((dm, 2 * dm), dm, 2 * dm)
    t["agent.Wdw"] = xav((3, 3, dm), 9, 9)
    t["agent.Wout"] = xav((dm, dm), dm, dm)
    g2 = config.agent_bias_side ** 2
    t["agent.B_A2P"] = zeros((config.n_heads, config.n_agents, g2))
    t["agent.B_P2A"] = zeros((config.n_heads, g2, config.n_agents))
    s = config.ssm_state_dim
    for layer in range(config.srmamba_layers):
        p = f"srmamba{layer}"
        t[f"{p}.ln_g"] = ones((dm,))
        t[f"{p}.ln_b"] = zeros((dm,))
        t[f"{p}.A"] = Tensor(np.tile(-np.arange(1.0, s + 1.0), (dm, 1)).astype(dtype))
        t[f"{p}.W_delta"] = xav((dm, dm), dm, dm)
        # softplus(b_delta) = 0.05: the scan starts with a short memory step
        t[f"{p}.b_delta"] = Tensor(np.full((dm,), math.log(math.expm1(0.05)), dtype=dtype))
        t[f"{p}.W_B"] = xav((dm, s), dm, s)
        t[f"{p}.W_C"] = xav((dm, s), dm, s)
        t[f"{p}.D"] = ones((dm,))
    hid = config.pool_hidden_dim
    t["pool.W1"] = xav((dm, hid), dm, hid)
    t["pool.b1"] = zeros((hid,))
    t["pool.W2"] = xav((hid, 1), hid, 1)
    t["pool.b2"] = zeros((1,))
    t["clf.W"] = xav((dm, N_BINS), dm, N_BINS)
    t["clf.b"] = zeros((N_BINS,))
    return ModelParams(config, t)


# -- building blocks ----------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    return x * ((x * INV_SQRT2).erf() + 1.0) * 0.5


def layer_norm(x: Tensor, gain: Tensor | None = None, bias: Tensor | None = None) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    out = centered / (var + LN_EPS).sqrt()
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def _dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    if p <= 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return x * Tensor(mask)


def project_input(x: Tensor, params: ModelParams) -> Tensor:
    """GELU(X W + b): project patch embeddings to the model width."""
    if x.shape[1] != params.config.d_in:
        raise ShapeError(f"bag dim {x.shape[1]} != configured d_in {params.config.d_in}")
    return gelu(x @ params["proj.W"] + params["proj.b"])


def cycle_pad_rows(x: Tensor, target: int) -> Tensor:
    """Extend to ``target`` rows by cycling tokens from the sequence start."""
    n = x.shape[0]
    if target == n:
        return x
    return x.take_rows(np.arange(target) % n)


def pad_square_with_class(xp: Tensor, params: ModelParams) -> tuple[Tensor, int]:
    """Cycle-pad to the next perfect square and prepend the class token."""
    n = xp.shape[0]
    side = math.isqrt(n)
    if side * side < n:
        side += 1
    n_prime = side * side
    grid = cycle_pad_rows(xp, n_prime)
    return concat([params["cls_token"], grid], axis=0), n_prime


def _to_heads(x: Tensor, n_heads: int) -> Tensor:
    n, dm = x.shape
    return x.reshape(n, n_heads, dm // n_heads).transpose(1, 0, 2)


def _from_heads(x: Tensor) -> Tensor:
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _segment_mean_matrix(n: int, m: int, dtype) -> np.ndarray:
    """(m, n) averaging matrix over contiguous segments; the last segment
    absorbs the remainder."""
    sizes = [n // m] * (m - 1) + [n - (m - 1) * (n // m)]
    mat = np.zeros((m, n), dtype=dtype)
    start = 0
    for i, size in enumerate(sizes):
        mat[i, start : start + size] = 1.0 / size
        start += size
    return mat


def newton_schulz_pinv(a: Tensor, iters: int) -> Tensor:
    """Iterative Moore-Penrose pseudo-inverse of a stack of square matrices."""
    m = a.shape[-1]
    eye = Tensor(np.eye(m, dtype=a.data.dtype))
    norm1 = a.sum(axis=-2, keepdims=True).max(axis=-1, keepdims=True)
    norm_inf = a.sum(axis=-1, keepdims=True).max(axis=-2, keepdims=True)
    z = a.transpose(0, 2, 1) / (norm1 * norm_inf)
    for _ in range(iters):
        az = a @ z
        inner = eye * 7.0 - az
        inner = eye * 15.0 - az @ inner
        inner = eye * 13.0 - az @ inner
        z = z * 0.25 @ inner
    return z


def nystrom_attention_layer(seq: Tensor, params: ModelParams, which: str) -> Tensor:
    """Pre-layernorm multi-head Nystrom attention with a residual connection.

    Landmarks are contiguous-segment means of the (normalized) query and key
    rows; the softmax kernel is approximated by F pinv(A) B with the
    pseudo-inverse from Newton-Schulz iterations. With landmark count equal
    to the token count this reduces to exact softmax attention.
    """
    cfg = params.config
    n = seq.shape[0]
    x = layer_norm(seq, params[f"{which}.ln_g"], params[f"{which}.ln_b"])
    scale = 1.0 / math.sqrt(cfg.head_dim)
    q = _to_heads(x @ params[f"{which}.Wq"], cfg.n_heads) * scale
    k = _to_heads(x @ params[f"{which}.Wk"], cfg.n_heads)
    v = _to_heads(x @ params[f"{which}.Wv"], cfg.n_heads)
    m = min(cfg.n_landmarks, n)
    if m == n:
        # segment size 1: F pinv(A) B collapses to A A+ A = A, i.e. exact
        # softmax attention, which the landmark construction computes directly
        out = (q @ k.transpose(0, 2, 1)).softmax() @ v
    else:
        seg = Tensor(_segment_mean_matrix(n, m, x.data.dtype))
        q_land = seg @ q
        k_land = seg @ k
        kernel_f = (q @ k_land.transpose(0, 2, 1)).softmax()
        kernel_a = (q_land @ k_land.transpose(0, 2, 1)).softmax()
        kernel_b = (q_land @ k.transpose(0, 2, 1)).softmax()
        out = kernel_f @ (newton_schulz_pinv(kernel_a, cfg.pinv_iters) @ (kernel_b @ v))
    return _from_heads(out) @ params[f"{which}.Wo"] + seq


def ppeg_encode(seq: Tensor, params: ModelParams) -> Tensor:
    """Multi-scale depthwise-conv positional encoding on the token grid.

    The class token bypasses; the remaining tokens are reshaped to their
    square grid and receive Conv7 + Conv5 + Conv3 + identity.
    """
    n_grid = seq.shape[0] - 1
    side = math.isqrt(n_grid)
    if side * side != n_grid:
        raise ShapeError(f"{n_grid} grid tokens do not form a square")
    cls_row = seq[0:1]
    img = seq[1:].reshape(side, side, seq.shape[1])
    out = (
        dwconv2d(img, params["ppeg.K7"])
        + dwconv2d(img, params["ppeg.K5"])
        + dwconv2d(img, params["ppeg.K3"])
        + img
    )
    return concat([cls_row, out.reshape(n_grid, seq.shape[1])], axis=0)


def _nearest_grid_index(side: int, stored_side: int) -> np.ndarray:
    """Flat nearest-neighbor map from a side x side grid onto the stored grid."""
    pos = np.minimum((np.arange(side) + 0.5) * stored_side // side, stored_side - 1).astype(int)
    return (pos[:, None] * stored_side + pos[None, :]).reshape(-1)


def agent_attention(x: Tensor, params: ModelParams) -> Tensor:
    """Two-stage agent attention over grid tokens (class token handled by caller).

    Agents attend over the tokens (A2P), tokens then attend over the updated
    agents (P2A); a depthwise conv over V on the 2-D grid adds a local path.
    Token count is cycle-padded to a perfect square when needed; positional
    biases are stored on a fixed square grid and nearest-neighbor resized.
    """
    cfg = params.config
    n = x.shape[0]
    side = math.isqrt(n)
    if side * side < n:
        side += 1
    n2 = side * side
    xs = cycle_pad_rows(x, n2)
    dm = cfg.d_model
    q = xs @ params["agent.Wq"]
    kv = xs @ params["agent.Wkv"]
    k, v = kv[:, :dm], kv[:, dm:]
    scale = 1.0 / math.sqrt(cfg.head_dim)
    qh = _to_heads(q, cfg.n_heads) * scale
    kh = _to_heads(k, cfg.n_heads)
    vh = _to_heads(v, cfg.n_heads)
    agents = _to_heads(params["agent.P_agent"], cfg.n_heads) * scale
    bias_a2p = params["agent.B_A2P"]
    bias_p2a = params["agent.B_P2A"]
    if side != cfg.agent_bias_side:
        idx = _nearest_grid_index(side, cfg.agent_bias_side)
        bias_a2p = bias_a2p.take(idx, axis=2)
        bias_p2a = bias_p2a.take(idx, axis=1)
    a2p = (agents @ kh.transpose(0, 2, 1) + bias_a2p).softmax()
    agents_updated = a2p @ vh
    p2a = (qh @ agents_updated.transpose(0, 2, 1) + bias_p2a).softmax()
    attended = _from_heads(p2a @ agents_updated)
    local = dwconv2d(v.reshape(side, side, dm), params["agent.Wdw"]).reshape(n2, dm)
    out = (local + attended) @ params["agent.Wout"]
    return out[:n] if n2 != n else out


def srmamba_reorder(n: int, rate: int) -> np.ndarray:
    """Concatenation of the stride-``rate`` subsequences of 0..n-1."""
    if rate < 1:
        raise ValueError("rate must be >= 1")
    return np.concatenate([np.arange(r, n, rate) for r in range(min(rate, n))])


def selective_scan(x: Tensor, params: ModelParams, layer: int) -> Tensor:
    """Input-dependent diagonal state-space scan over the reordered sequence.

    delta_t = softplus(x_t W_delta + b_delta) per channel; the state matrix
    is discretized with a zero-order hold (abar = exp(delta A), bbar =
    expm1(delta A)/A * B(x_t)); outputs are read through C(x_t) plus a
    learned skip D. The scan runs on the stride-reordered sequence and the
    result is permuted back; the residual is the caller's job.
    """
    p = f"srmamba{layer}"
    cfg = params.config
    n = x.shape[0]
    perm = srmamba_reorder(n, cfg.srmamba_rate)
    u = x.take_rows(perm) if cfg.srmamba_rate > 1 else x
    a = params[f"{p}.A"]
    delta = (u @ params[f"{p}.W_delta"] + params[f"{p}.b_delta"]).softplus()
    b_in = u @ params[f"{p}.W_B"]
    c_out = u @ params[f"{p}.W_C"]
    s = cfg.ssm_state_dim
    dm = cfg.d_model
    da = delta.reshape(n, dm, 1) * a
    abar = da.exp()
    # bbar = expm1(delta A)/A = delta * expm1x(delta A); no singularity at A = 0
    phi = delta.reshape(n, dm, 1) * da.expm1x()
    contrib = phi * b_in.reshape(n, 1, s) * u.reshape(n, dm, 1)
    h = linear_recurrence(abar, contrib)
    y = (h * c_out.reshape(n, 1, s)).sum(axis=2) + u * params[f"{p}.D"]
    if cfg.srmamba_rate > 1:
        y = y.take_rows(np.argsort(perm))
    return y


def attention_pool(
    z: Tensor,
    params: ModelParams,
    include_class: bool = True,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Gated attention pooling over the (parameter-free) normalized tokens."""
    z_norm = layer_norm(z)
    scores = (z_norm @ params["pool.W1"] + params["pool.b1"]).tanh() @ params["pool.W2"] + params["pool.b2"]
    if train and params.config.dropout > 0:
        scores = _dropout(scores, params.config.dropout, rng)
    if not include_class:
        scores = scores[1:]
        z_norm_pooled = z_norm[1:]
    else:
        z_norm_pooled = z_norm
    weights = scores.reshape(scores.shape[0]).softmax()
    pooled = weights.reshape(1, -1) @ z_norm_pooled
    return pooled, weights


@dataclass
class ForwardTrace:
    n_patches: int
    n_prime: int
    logits: np.ndarray
    pool_weights: np.ndarray  # per token, padding/class included, zeros if excluded
    cls_out: np.ndarray
    z_norm: np.ndarray
    tensors: dict = field(default_factory=dict)


def forward(
    bag: FeatureBag,
    params: ModelParams,
    config: ModelConfig | None = None,
    mode: str = "eval",
    seed: int = 0,
    pool_includes_class: bool = True,
) -> tuple[np.ndarray, ForwardTrace]:
    """Run a bag through the model; returns (logits, trace).

    ``mode="train"`` activates dropout seeded by ``seed``; eval mode is a
    pure function of (bag, params). The config's ablation flag skips a stage
    while leaving every tensor shape unchanged.
    """
    cfg = config or params.config
    struct = params.config  # tensor shapes always follow the params
    if config is not None and (config.d_in, config.d_model, config.n_heads) != (
        struct.d_in,
        struct.d_model,
        struct.n_heads,
    ):
        raise ShapeError("config passed to forward() is structurally incompatible with params")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    bag.validate()
    train = mode == "train"
    rng = np.random.default_rng(seed) if train else None
    dtype = params["proj.W"].data.dtype
    x = Tensor(np.ascontiguousarray(bag.features, dtype=dtype))
    xp = project_input(x, params)
    if train and cfg.dropout > 0:
        xp = _dropout(xp, cfg.dropout, rng)
    seq, n_prime = pad_square_with_class(xp, params)
    embedded = seq
    if cfg.ablation != "no_transformer":
        seq = nystrom_attention_layer(seq, params, "attn1")
        seq = ppeg_encode(seq, params)
        seq = nystrom_attention_layer(seq, params, "attn2")
    if cfg.ablation != "no_agent":
        grid = agent_attention(seq[1:], params)
        seq = concat([seq[0:1], grid], axis=0)
    if cfg.ablation != "no_srmamba":
        for layer in range(struct.srmamba_layers):
            normed = layer_norm(seq, params[f"srmamba{layer}.ln_g"], params[f"srmamba{layer}.ln_b"])
            seq = seq + selective_scan(normed, params, layer)
    pooled, weights = attention_pool(seq, params, pool_includes_class, train, rng)
    logits_t = pooled @ params["clf.W"] + params["clf.b"]
    logits = logits_t.data.reshape(N_BINS).astype(np.float64)
    if not np.isfinite(logits).all():
        raise DataError("forward pass produced non-finite logits")
    n_tokens = n_prime + 1
    pool_w = np.zeros(n_tokens, dtype=np.float64)
    offset = 0 if pool_includes_class else 1
    pool_w[offset:] = weights.data.astype(np.float64)
    z_norm = layer_norm(seq).data.astype(np.float64)
    trace = ForwardTrace(
        n_patches=bag.n_patches,
        n_prime=n_prime,
        logits=logits,
        pool_weights=pool_w,
        cls_out=seq.data[0].astype(np.float64),
        z_norm=z_norm,
        tensors={"input": x, "embedded": embedded, "final_seq": seq, "logits": logits_t},
    )
    return logits, trace


# -- gradient verification -----------------------------------------------------


@dataclass
class GradReport:
    per_tensor: dict[str, float]
    max_rel_err: float
    n_params: int
    elapsed_s: float

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_err < tolerance


def grad_check(
    config: ModelConfig,
    n_patches: int = 5,
    h: float = 1e-5,
    seed: int = 0,
    bin_index: int = 2,
    censored: int = 0,
    _corrupt: str | None = None,
) -> GradReport:
    """Compare analytic gradients of the survival loss with central differences.

    Runs in double precision on a tiny model. The reported figure per tensor
    is max |analytic - numeric| / max(|analytic|, |numeric|, 1e-4), i.e. a
    relative error with an absolute floor for near-zero entries.
    """
    if config.d_model > 16 or n_patches > 10:
        raise DataError("grad_check is for tiny configs (d_model <= 16, n <= 10)")
    t0 = time.perf_counter()
    params = init_params(config, seed=seed, dtype=np.float64)
    rng = substream(seed, "gradcheck-bag")
    from .bags import grid_coords

    bag = FeatureBag(
        slide_id="gradcheck",
        features=rng.standard_normal((n_patches, config.d_in)),
        coords=grid_coords(n_patches),
    )
    bag.features = bag.features.astype(np.float64)

    def loss_value() -> float:
        _, trace = forward(bag, params, config, mode="eval")
        return float(nll_graph(trace.tensors["logits"], bin_index, censored).data)

    params.clear_grads()
    _, trace = forward(bag, params, config, mode="eval")
    loss = nll_graph(trace.tensors["logits"], bin_index, censored)
    loss.backward()

    per_tensor: dict[str, float] = {}
    for name in params.names():
        tensor = params[name]
        analytic = np.zeros_like(tensor.data) if tensor.grad is None else np.asarray(tensor.grad)
        if not np.isfinite(analytic).all():
            raise GradError(f"non-finite analytic gradient in {name}")
        if _corrupt == name:
            analytic = -analytic
        flat = tensor.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_value()
            flat[i] = orig - h
            lo = loss_value()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-4)
            worst = max(worst, rel)
        per_tensor[name] = worst
    return GradReport(
        per_tensor=per_tensor,
        max_rel_err=max(per_tensor.values()),
        n_params=params.n_params(),
        elapsed_s=time.perf_counter() - t0,
    )


# -- checkpoints ----------------------------------------------------------------


def save_checkpoint(path: str | Path, params: ModelParams, seed: int = 0) -> None:
    """Single-file checkpoint: magic, JSON manifest, then an f32 blob."""
    params.check_finite()
    manifest_tensors = []
    offset = 0
    blobs = []
    for name in params.names():
        data = params[name].data.astype("<f4")
        manifest_tensors.append(
            {"name": name, "shape": list(data.shape), "dtype": "f4", "offset": offset}
        )
        blobs.append(data.tobytes())
        offset += data.nbytes
    manifest = {
        "version": CKPT_MAGIC.decode(),
        "config": asdict(params.config),
        "seed": int(seed),
        "tensors": manifest_tensors,
    }
    payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, ModelConfig, int]:
    raw = Path(path).read_bytes()
    if len(raw) < len(CKPT_MAGIC) + 8 or raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise FormatError(f"{path}: missing {CKPT_MAGIC.decode()} header")
    (manifest_len,) = struct.unpack_from("<Q", raw, len(CKPT_MAGIC))
    start = len(CKPT_MAGIC) + 8
    manifest = json.loads(raw[start : start + manifest_len].decode("utf-8"))
    blob = raw[start + manifest_len :]
    config = config_from_dict(manifest["config"])
    tensors: dict[str, Tensor] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        lo = entry["offset"]
        hi = lo + count * 4
        if hi > len(blob):
            raise TruncatedError(f"{path}: blob ends before tensor {entry['name']}")
        arr = np.frombuffer(blob[lo:hi], dtype="<f4").reshape(shape).astype(np.float32)
        tensors[entry["name"]] = Tensor(arr.copy())
    params = ModelParams(config, tensors)
    params.check_finite()
    return params, config, int(manifest["seed"])
