"""Miniature transducer: tanh-RNN encoder, tanh-RNN predictor, joint net.

Forward produces the full (T, L+1, K) logit lattice; backward propagates an
arbitrary lattice gradient to every parameter analytically, so any loss with
a logit gradient trains exactly.  Parameters live in a plain name -> array
dict.  The backbone is deliberately tiny ("toy-tanh-rnn" in metrics), sized
for desk-scale experiments rather than accuracy claims.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .lattice import LogitLattice, TargetSequence

BACKBONE = "toy-tanh-rnn"
INIT_SCALE = 0.08

ModelParams = dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    feature_dim: int
    encoder_hidden: int
    prediction_embed_dim: int
    prediction_hidden: int
    joint_dim: int
    seed: int = 0

    def __post_init__(self) -> None:
        dims = (
            self.feature_dim,
            self.encoder_hidden,
            self.prediction_embed_dim,
            self.prediction_hidden,
            self.joint_dim,
        )
        if self.vocab_size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if any(d < 1 for d in dims):
            raise ValueError(f"all dims must be >= 1, got {dims}")


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape map; the start symbol is embedding row ``vocab_size``."""
    K = cfg.vocab_size
    return {
        "enc_w_in": (cfg.encoder_hidden, cfg.feature_dim),
        "enc_w_rec": (cfg.encoder_hidden, cfg.encoder_hidden),
        "enc_b": (cfg.encoder_hidden,),
        "pred_embed": (K + 1, cfg.prediction_embed_dim),
        "pred_w_in": (cfg.prediction_hidden, cfg.prediction_embed_dim),
        "pred_w_rec": (cfg.prediction_hidden, cfg.prediction_hidden),
        "pred_b": (cfg.prediction_hidden,),
        "joint_w_enc": (cfg.joint_dim, cfg.encoder_hidden),
        "joint_w_pred": (cfg.joint_dim, cfg.prediction_hidden),
        "joint_b": (cfg.joint_dim,),
        "joint_w_out": (K, cfg.joint_dim),
        "joint_b_out": (K,),
    }


# Matrices eligible for pruning; biases, the embedding table and the joint
# layers always stay dense.
PRUNABLE = ("enc_w_in", "enc_w_rec", "pred_w_in", "pred_w_rec")


def init_params(cfg: ModelConfig, seed: int | None = None) -> ModelParams:
    """Seeded uniform init in [-INIT_SCALE, INIT_SCALE], fixed tensor order."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return {
        name: rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        for name, shape in param_shapes(cfg).items()
    }


def count_params(params: ModelParams) -> int:
    return sum(int(p.size) for p in params.values())


@dataclass
class ForwardCache:
    """Activations retained for the analytic backward pass."""

    features: np.ndarray      # (T, F)
    enc_states: np.ndarray    # (T, H_e)
    tokens: np.ndarray        # (L+1,) embedding rows consumed, start first
    embeds: np.ndarray        # (L+1, E)
    pred_states: np.ndarray   # (L+1, H_p)
    joint_tanh: np.ndarray    # (T, L+1, J)


def _run_rnn(x: np.ndarray, w_in: np.ndarray, w_rec: np.ndarray, b: np.ndarray) -> np.ndarray:
    states = np.empty((x.shape[0], b.shape[0]))
    h = np.zeros(b.shape[0])
    pre_in = x @ w_in.T + b
    for t in range(x.shape[0]):
        h = np.tanh(pre_in[t] + w_rec @ h)
        states[t] = h
    return states


def forward_lattice(
    params: ModelParams,
    features: np.ndarray,
    target: TargetSequence,
) -> tuple[LogitLattice, ForwardCache]:
    """Compute logits h[t, u] = W_out tanh(W_enc z_t + W_pred p_u + b) + b_out."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params["enc_w_in"].shape[1]:
        raise ValueError(
            f"features must be (T, {params['enc_w_in'].shape[1]}), got {x.shape}"
        )
    if x.shape[0] < 1:
        raise ValueError("need at least one frame")
    K = params["joint_b_out"].shape[0]
    if target.vocab.size != K:
        raise ValueError(f"target vocab size {target.vocab.size} != model vocab {K}")

    z = _run_rnn(x, params["enc_w_in"], params["enc_w_rec"], params["enc_b"])

    start_row = params["pred_embed"].shape[0] - 1
    tokens = np.array([start_row, *target.labels], dtype=np.intp)
    g = params["pred_embed"][tokens]
    p = _run_rnn(g, params["pred_w_in"], params["pred_w_rec"], params["pred_b"])

    pre = z @ params["joint_w_enc"].T  # (T, J)
    pre = pre[:, None, :] + (p @ params["joint_w_pred"].T)[None, :, :] + params["joint_b"]
    v = np.tanh(pre)  # (T, L+1, J)
    logits = v @ params["joint_w_out"].T + params["joint_b_out"]
    cache = ForwardCache(x, z, tokens, g, p, v)
    return LogitLattice(logits), cache


def _rnn_backward(
    inputs: np.ndarray,
    states: np.ndarray,
    d_states: np.ndarray,
    w_in: np.ndarray,
    w_rec: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backprop through the tanh recurrence; returns dW_in, dW_rec, db, d_inputs."""
    n = inputs.shape[0]
    d_w_in = np.zeros_like(w_in)
    d_w_rec = np.zeros_like(w_rec)
    d_b = np.zeros(w_in.shape[0])
    d_inputs = np.empty_like(inputs)
    carry = np.zeros(w_in.shape[0])
    for t in range(n - 1, -1, -1):
        d_pre = (d_states[t] + carry) * (1.0 - states[t] ** 2)
        d_w_in += np.outer(d_pre, inputs[t])
        if t > 0:
            d_w_rec += np.outer(d_pre, states[t - 1])
        d_b += d_pre
        d_inputs[t] = w_in.T @ d_pre
        carry = w_rec.T @ d_pre
    return d_w_in, d_w_rec, d_b, d_inputs


def backward_params(
    params: ModelParams,
    cache: ForwardCache,
    lattice_grad: np.ndarray,
) -> ModelParams:
    """Exact parameter gradient for any loss given its logit-lattice gradient."""
    g = np.asarray(lattice_grad, dtype=np.float64)
    v = cache.joint_tanh
    if g.shape != v.shape[:2] + (params["joint_w_out"].shape[0],):
        raise ValueError(f"lattice grad shape {g.shape} does not match the forward lattice")

    d_v = g @ params["joint_w_out"]            # (T, U, J)
    d_pre = d_v * (1.0 - v**2)

    grads: ModelParams = {}
    grads["joint_w_out"] = np.einsum("tuk,tuj->kj", g, v)
    grads["joint_b_out"] = g.sum(axis=(0, 1))
    grads["joint_w_enc"] = np.einsum("tuj,th->jh", d_pre, cache.enc_states)
    grads["joint_w_pred"] = np.einsum("tuj,uh->jh", d_pre, cache.pred_states)
    grads["joint_b"] = d_pre.sum(axis=(0, 1))

    d_z = np.einsum("tuj,jh->th", d_pre, params["joint_w_enc"])
    d_p = np.einsum("tuj,jh->uh", d_pre, params["joint_w_pred"])

    d_w_in, d_w_rec, d_b, _ = _rnn_backward(
        cache.features, cache.enc_states, d_z, params["enc_w_in"], params["enc_w_rec"]
    )
    grads["enc_w_in"], grads["enc_w_rec"], grads["enc_b"] = d_w_in, d_w_rec, d_b

    d_w_in, d_w_rec, d_b, d_embeds = _rnn_backward(
        cache.embeds, cache.pred_states, d_p, params["pred_w_in"], params["pred_w_rec"]
    )
    grads["pred_w_in"], grads["pred_w_rec"], grads["pred_b"] = d_w_in, d_w_rec, d_b

    d_table = np.zeros_like(params["pred_embed"])
    np.add.at(d_table, cache.tokens, d_embeds)
    grads["pred_embed"] = d_table
    return {name: grads[name] for name in params}


@dataclass(frozen=True)
class InitReport:
    """Which student tensors were copied from the teacher vs freshly drawn."""

    copied: tuple[str, ...]
    reinitialized: tuple[str, ...]


def init_student_from_teacher(
    teacher_params: ModelParams,
    student_cfg: ModelConfig,
    seed: int,
) -> tuple[ModelParams, InitReport]:
    """Copy every shape-matching tensor; re-draw the rest from the seeded scheme."""
    teacher_K = teacher_params["joint_b_out"].shape[0]
    if teacher_K != student_cfg.vocab_size:
        raise ValueError(
            f"vocab mismatch: teacher {teacher_K}, student {student_cfg.vocab_size}"
        )
    fresh = init_params(student_cfg, seed=seed)
    params: ModelParams = {}
    copied: list[str] = []
    reinitialized: list[str] = []
    for name, shape in param_shapes(student_cfg).items():
        source = teacher_params.get(name)
        if source is not None and source.shape == shape:
            params[name] = source.copy()
            copied.append(name)
        else:
            params[name] = fresh[name]
            reinitialized.append(name)
    return params, InitReport(tuple(copied), tuple(reinitialized))


MomentumState = dict[str, np.ndarray]


def zero_momentum(params: ModelParams) -> MomentumState:
    return {name: np.zeros_like(p) for name, p in params.items()}


def sgd_step(
    params: ModelParams,
    grads: ModelParams,
    lr: float,
    momentum_state: MomentumState,
    momentum: float = 0.9,
) -> tuple[ModelParams, MomentumState]:
    """Classical momentum update: m <- mu*m + g, w <- w - lr*m."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    new_params: ModelParams = {}
    new_state: MomentumState = {}
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        m = momentum * momentum_state[name] + g
        new_state[name] = m
        new_params[name] = p - lr * m
    return new_params, new_state


def decode_greedy(
    params: ModelParams,
    features: np.ndarray,
    max_symbols_per_frame: int = 4,
) -> list[int]:
    """Greedy transducer decoding: emit argmax tokens until blank or the cap."""
    if max_symbols_per_frame < 1:
        raise ValueError("max_symbols_per_frame must be >= 1")
    x = np.asarray(features, dtype=np.float64)
    z = _run_rnn(x, params["enc_w_in"], params["enc_w_rec"], params["enc_b"])

    w_in, w_rec, b = params["pred_w_in"], params["pred_w_rec"], params["pred_b"]
    start_row = params["pred_embed"].shape[0] - 1
    p_state = np.tanh(w_in @ params["pred_embed"][start_row] + b)

    out: list[int] = []
    for t in range(z.shape[0]):
        joint_enc = params["joint_w_enc"] @ z[t]
        for _ in range(max_symbols_per_frame):
            pre = joint_enc + params["joint_w_pred"] @ p_state + params["joint_b"]
            logits = params["joint_w_out"] @ np.tanh(pre) + params["joint_b_out"]
            k = int(np.argmax(logits))
            if k == 0:  # blank: advance to the next frame
                break
            out.append(k)
            p_state = np.tanh(w_in @ params["pred_embed"][k] + w_rec @ p_state + b)
    return out


def param_group(names: Iterable[str], params: ModelParams) -> dict[str, np.ndarray]:
    missing = [n for n in names if n not in params]
    if missing:
        raise KeyError(f"unknown parameter names: {missing}")
    return {n: params[n] for n in names}
