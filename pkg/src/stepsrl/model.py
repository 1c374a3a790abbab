"""Speech/text entanglement network for spoken-word representations.

Three Bi-LSTMs read the context speech, the target word's speech and the
text embeddings of the whole window. The context finals weight each target
timestep by a raw dot product, the weighted and original states are
concatenated per timestep and summarised by an encoder LSTM, the latent is
fused with speaker metadata and a decoder LSTM spells out the phone sequence.

All arrays are batched along axis 0; a single example is a batch of one.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .corpus import SEQ_LEN, TrainingExample
from .tensor import Tensor

LSTM_BLOCKS = ("bilstm_c.fwd", "bilstm_c.bwd", "bilstm_t.fwd", "bilstm_t.bwd",
               "bilstm_w.fwd", "bilstm_w.bwd", "encoder", "decoder")


@dataclass(frozen=True)
class ModelConfig:
    d_mfcc: int
    d_w: int
    hidden: int          # H, per-direction Bi-LSTM size
    d: int               # encoder LSTM size
    d_e: int             # latent / decoder size
    vocab: int           # V
    d_a: int = 0
    k: int = SEQ_LEN
    sops: int = 0
    normalize_attention: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    shapes = {}

    def lstm(prefix, d_in, hidden):
        shapes[f"{prefix}.w_x"] = (d_in, 4 * hidden)
        shapes[f"{prefix}.w_h"] = (hidden, 4 * hidden)
        shapes[f"{prefix}.b"] = (4 * hidden,)

    for name, d_in in (("bilstm_c", cfg.d_mfcc), ("bilstm_t", cfg.d_mfcc), ("bilstm_w", cfg.d_w)):
        lstm(f"{name}.fwd", d_in, cfg.hidden)
        lstm(f"{name}.bwd", d_in, cfg.hidden)
    lstm("encoder", 6 * cfg.hidden, cfg.d)
    shapes["fuse.w1"] = (cfg.d, cfg.d_e)
    if cfg.d_a:
        shapes["fuse.w2"] = (cfg.d_a, cfg.d_e)
    shapes["fuse.b"] = (cfg.d_e,)
    shapes["decoder.embed"] = (cfg.vocab, cfg.d_e)
    lstm("decoder", cfg.d_e, cfg.d_e)
    shapes["proj.w"] = (cfg.d_e, cfg.vocab)
    shapes["proj.b"] = (cfg.vocab,)
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator, dtype=None) -> dict[str, Tensor]:
    """Uniform(+-1/sqrt(fan_in)) matrices, zero biases, forget-gate bias 1."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            value = np.zeros(shape)
            if name.endswith(".b") and name[:-2] in LSTM_BLOCKS:
                hidden = shape[0] // 4
                value[hidden:2 * hidden] = 1.0
        elif name == "decoder.embed":
            value = _uniform(rng, shape, shape[1])
        else:
            value = _uniform(rng, shape, shape[0])
        params[name] = Tensor(value, requires_grad=True, name=name, dtype=dtype)
    return params


def zero_params(cfg: ModelConfig, dtype=None) -> dict[str, Tensor]:
    return {name: Tensor(np.zeros(shape), requires_grad=True, name=name, dtype=dtype)
            for name, shape in param_shapes(cfg).items()}


def l2_weight_names(params) -> list[str]:
    """Input and recurrent matrices of every (Bi-)LSTM; biases excluded."""
    return [name for name in params if name.rsplit(".", 1)[0] in LSTM_BLOCKS
            and name.rsplit(".", 1)[1] in ("w_x", "w_h")]


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    target: np.ndarray   # B x n x d_mfcc
    left: np.ndarray     # B x m x n x d_mfcc
    right: np.ndarray    # B x m x n x d_mfcc
    text: np.ndarray     # B x (2m+1) x d_w
    aux: np.ndarray      # B x d_a
    phones: np.ndarray   # B x k

    def __len__(self):
        return self.target.shape[0]


def collate(examples: list[TrainingExample], dtype=np.float32) -> Batch:
    return Batch(
        target=np.stack([e.target for e in examples]).astype(dtype),
        left=np.stack([e.left for e in examples]).astype(dtype),
        right=np.stack([e.right for e in examples]).astype(dtype),
        text=np.stack([e.text for e in examples]).astype(dtype),
        aux=np.stack([e.aux for e in examples]).astype(dtype),
        phones=np.stack([e.phones for e in examples]).astype(np.int64),
    )


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def lstm_run(params, prefix: str, seq: Tensor, h0: Tensor | None = None, reverse: bool = False):
    """Run one LSTM over ``seq`` (B x T x D); returns hidden states in input order."""
    w_x, w_h, b = params[f"{prefix}.w_x"], params[f"{prefix}.w_h"], params[f"{prefix}.b"]
    if seq.shape[-1] != w_x.shape[0]:
        raise T.DimensionError(f"{prefix}: input size {seq.shape[-1]} != {w_x.shape[0]}")
    if seq.shape[1] < 1:
        raise T.DimensionError(f"{prefix}: empty sequence")
    batch, hidden = seq.shape[0], w_h.shape[0]
    steps = T.unstack(seq @ w_x + b, axis=1)
    zeros = np.zeros((batch, hidden), dtype=w_h.dtype)
    h = h0 if h0 is not None else Tensor(zeros, dtype=w_h.dtype)
    c = Tensor(zeros, dtype=w_h.dtype)
    order = range(len(steps) - 1, -1, -1) if reverse else range(len(steps))
    hs = [None] * len(steps)
    for t in order:
        h, c = T.lstm_cell(steps[t], h, c, w_h)
        hs[t] = h
    return hs


def bilstm_forward(params, name: str, seq: Tensor):
    """Returns (h: B x T x 2H, final forward output, final backward output)."""
    fwd = lstm_run(params, f"{name}.fwd", seq)
    bwd = lstm_run(params, f"{name}.bwd", seq, reverse=True)
    h = T.concat([T.stack(fwd, axis=1), T.stack(bwd, axis=1)], axis=-1)
    return h, fwd[-1], bwd[0]


def context_vector(o_fwd: Tensor, o_bwd: Tensor) -> Tensor:
    return T.concat([o_fwd, o_bwd], axis=-1)


def entangle(h_target: Tensor, f: Tensor, normalize: bool = False):
    """alpha_i = h_i . f, output row i = alpha_i * h_i. Shapes B x n x 2H and B x 2H."""
    if h_target.shape[-1] != f.shape[-1]:
        raise T.DimensionError(f"entangle: state size {h_target.shape[-1]} != context size {f.shape[-1]}")
    batch, n, width = h_target.shape
    alpha = T.tsum(h_target * T.reshape(f, (batch, 1, width)), axis=-1)
    if normalize:
        alpha = T.softmax(alpha)
    return h_target * T.reshape(alpha, (batch, n, 1)), alpha


def encode_latent(params, cfg: ModelConfig, h_tc: Tensor, h_tw: Tensor, h_t: Tensor, aux):
    stacked = T.concat([h_tc, h_tw, h_t], axis=-1)
    z = lstm_run(params, "encoder", stacked)[-1]
    z_new = z @ params["fuse.w1"]
    if cfg.d_a:
        aux = T.as_tensor(aux, dtype=z.dtype)
        if aux.shape[-1] != cfg.d_a:
            raise T.DimensionError(f"auxiliary vector has size {aux.shape[-1]}, expected {cfg.d_a}")
        z_new = z_new + aux @ params["fuse.w2"]
    return z, z_new + params["fuse.b"]


def _decoder_step(params, h, c, prev_tokens):
    emb = T.getitem(params["decoder.embed"], prev_tokens)
    x_proj = emb @ params["decoder.w_x"] + params["decoder.b"]
    return T.lstm_cell(x_proj, h, c, params["decoder.w_h"])


def decode_teacher_forced(params, cfg: ModelConfig, z_new: Tensor, gold: np.ndarray) -> Tensor:
    """Logits B x k x V; step i reads gold token i-1 (SOPS at step 0)."""
    batch = z_new.shape[0]
    prev = np.concatenate([np.full((batch, 1), cfg.sops), gold[:, :-1]], axis=1)
    emb = T.getitem(params["decoder.embed"], prev)
    hs = lstm_run(params, "decoder", emb, h0=z_new)
    return T.stack(hs, axis=1) @ params["proj.w"] + params["proj.b"]


def decode_greedy(params, cfg: ModelConfig, z_new: Tensor, eops: int, pad: int):
    """Feeds back its own argmax; after EOPS every slot is PAD. Returns (tokens, logits)."""
    batch = z_new.shape[0]
    h = z_new
    c = Tensor(np.zeros(z_new.shape, dtype=z_new.dtype), dtype=z_new.dtype)
    prev = np.full(batch, cfg.sops)
    done = np.zeros(batch, dtype=bool)
    tokens = np.full((batch, cfg.k), pad, dtype=np.int64)
    logits = []
    for i in range(cfg.k):
        h, c = _decoder_step(params, h, c, prev)
        step = h @ params["proj.w"] + params["proj.b"]
        logits.append(step)
        pred = step.data.argmax(axis=-1)
        tokens[:, i] = np.where(done, pad, pred)
        done |= pred == eops
        prev = pred
    return tokens, T.stack(logits, axis=1)


# ---------------------------------------------------------------------------
# full network
# ---------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    h_c: Tensor
    h_t: Tensor
    h_w: Tensor
    f_c: Tensor
    f_w: Tensor
    alpha_c: Tensor
    alpha_w: Tensor
    h_tc: Tensor
    h_tw: Tensor
    z: Tensor
    z_new: Tensor
    logits: Tensor | None = None
    tokens: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def encode(params, cfg: ModelConfig, batch: Batch) -> ForwardTrace:
    """Everything up to and including the fused latent."""
    dtype = params["fuse.w1"].dtype
    bsz, m, n, dm = batch.left.shape
    ctx = np.concatenate([batch.left, batch.right], axis=1).reshape(bsz, 2 * m * n, dm)
    h_c, oc_f, oc_b = bilstm_forward(params, "bilstm_c", Tensor(ctx, dtype=dtype))
    h_t, _, _ = bilstm_forward(params, "bilstm_t", Tensor(batch.target, dtype=dtype))
    h_w, ow_f, ow_b = bilstm_forward(params, "bilstm_w", Tensor(batch.text, dtype=dtype))
    f_c = context_vector(oc_f, oc_b)
    f_w = context_vector(ow_f, ow_b)
    h_tc, alpha_c = entangle(h_t, f_c, cfg.normalize_attention)
    h_tw, alpha_w = entangle(h_t, f_w, cfg.normalize_attention)
    z, z_new = encode_latent(params, cfg, h_tc, h_tw, h_t, batch.aux)
    return ForwardTrace(h_c, h_t, h_w, f_c, f_w, alpha_c, alpha_w, h_tc, h_tw, z, z_new)


def forward(params, cfg: ModelConfig, batch: Batch | TrainingExample, mode: str = "teacher_forced",
            eops: int | None = None, pad: int | None = None) -> ForwardTrace:
    if isinstance(batch, TrainingExample):
        batch = collate([batch])
    trace = encode(params, cfg, batch)
    if mode == "teacher_forced":
        trace.logits = decode_teacher_forced(params, cfg, trace.z_new, batch.phones)
    elif mode == "greedy":
        if eops is None or pad is None:
            raise ValueError("greedy decoding needs the EOPS and PAD ids")
        trace.tokens, trace.logits = decode_greedy(params, cfg, trace.z_new, eops, pad)
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    return trace
