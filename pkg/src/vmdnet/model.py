"""BiLSTM + multi-head self-attention binary classifier.

Forward and backward passes are written out by hand over numpy arrays.  All
functions accept a batch ``x`` of shape ``(B, T, d)``; a single ``(T, d)``
sequence is treated as a batch of one.

Pipeline per sample::

    x -> BiLSTM -> [multi-head attention -> dropout] -> mean over T
      -> w . pooled + b -> sigmoid

With ``use_attention=False`` the BiLSTM states are mean-pooled directly.
"""

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .core import make_rng, sigmoid, softmax_rows
from .errors import ConfigError, InputError, ShapeError, StaleCacheError

LOSS_EPS = 1e-12
CHECKPOINT_FORMAT = "vmdnet-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    seq_len: int
    hidden_size: int = 16
    num_heads: int = 2
    dropout_rate: float = 0.1
    seed: int = 0
    use_attention: bool = True

    def __post_init__(self):
        for name in ("input_dim", "seq_len", "hidden_size", "num_heads"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.model_width % self.num_heads:
            raise ConfigError(
                f"num_heads={self.num_heads} does not divide the attention width {self.model_width}"
            )

    @property
    def model_width(self):
        return 2 * self.hidden_size

    @property
    def head_dim(self):
        return self.model_width // self.num_heads

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class LstmParams:
    """Gate blocks are laid out as [input, forget, candidate, output]."""

    w_fwd: np.ndarray  # (d, 4H)
    u_fwd: np.ndarray  # (H, 4H)
    b_fwd: np.ndarray  # (4H,)
    w_bwd: np.ndarray
    u_bwd: np.ndarray
    b_bwd: np.ndarray


@dataclass
class AttentionParams:
    w_q: np.ndarray  # (h, 2H, d_k)
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray  # (h * d_k, 2H)


@dataclass
class OutputHead:
    w: np.ndarray  # (2H,)
    b: np.ndarray  # (1,)


@dataclass
class ModelParams:
    lstm: LstmParams
    attention: AttentionParams | None
    head: OutputHead
    version: int = field(default=0, compare=False)

    def named_arrays(self):
        """Ordered ``{dotted name: array}`` view; arrays are shared, not copied."""
        out = {}
        for group_name in ("lstm", "attention", "head"):
            group = getattr(self, group_name)
            if group is None:
                continue
            for f in fields(group):
                out[f"{group_name}.{f.name}"] = getattr(group, f.name)
        return out

    def copy(self):
        return params_from_arrays({k: v.copy() for k, v in self.named_arrays().items()})

    def zeros_like(self):
        return params_from_arrays({k: np.zeros_like(v) for k, v in self.named_arrays().items()})


def params_from_arrays(arrays):
    def group(cls, prefix):
        names = [f.name for f in fields(cls)]
        if not any(f"{prefix}.{n}" in arrays for n in names):
            return None
        return cls(**{n: arrays[f"{prefix}.{n}"] for n in names})

    lstm = group(LstmParams, "lstm")
    head = group(OutputHead, "head")
    if lstm is None or head is None:
        raise InputError("parameter set is missing the LSTM or output head arrays")
    return ModelParams(lstm=lstm, attention=group(AttentionParams, "attention"), head=head)


def init_params(cfg, rng=None):
    """Uniform(+-1/sqrt(fan)) weights; forget-gate bias 1, other biases 0."""
    rng = rng if rng is not None else make_rng(cfg.seed)
    d, hid, width = cfg.input_dim, cfg.hidden_size, cfg.model_width
    s = 1.0 / math.sqrt(hid)

    def u(shape, scale):
        return rng.uniform(-scale, scale, size=shape)

    def bias():
        b = np.zeros(4 * hid)
        b[hid:2 * hid] = 1.0
        return b

    lstm = LstmParams(
        w_fwd=u((d, 4 * hid), s), u_fwd=u((hid, 4 * hid), s), b_fwd=bias(),
        w_bwd=u((d, 4 * hid), s), u_bwd=u((hid, 4 * hid), s), b_bwd=bias(),
    )
    attention = None
    if cfg.use_attention:
        h, dk = cfg.num_heads, cfg.head_dim
        sa = 1.0 / math.sqrt(width)
        attention = AttentionParams(
            w_q=u((h, width, dk), sa), w_k=u((h, width, dk), sa), w_v=u((h, width, dk), sa),
            w_o=u((h * dk, width), 1.0 / math.sqrt(h * dk)),
        )
    head = OutputHead(w=u((width,), 1.0 / math.sqrt(width)), b=np.zeros(1))
    return ModelParams(lstm=lstm, attention=attention, head=head)


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise ShapeError(f"expected a (T, d) or (B, T, d) input, got shape {x.shape}")
    return x, False


# ----------------------------------------------------------------------------
# LSTM


def _lstm_forward(w, u, b, x, reverse):
    bsz, steps, _ = x.shape
    hid = u.shape[0]
    h = np.zeros((bsz, hid))
    c = np.zeros((bsz, hid))
    hs = np.zeros((bsz, steps, hid))
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    tape = []
    for t in order:
        z = x[:, t] @ w + h @ u + b
        i = sigmoid(z[:, :hid])
        f = sigmoid(z[:, hid:2 * hid])
        g = np.tanh(z[:, 2 * hid:3 * hid])
        o = sigmoid(z[:, 3 * hid:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        tape.append((t, i, f, g, o, c_prev, h_prev, tc))
    return hs, tape


def _lstm_backward(w, u, x, tape, dhs):
    hid = u.shape[0]
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * hid)
    dx = np.zeros_like(x)
    dh_next = np.zeros((x.shape[0], hid))
    dc_next = np.zeros((x.shape[0], hid))
    for t, i, f, g, o, c_prev, h_prev, tc in reversed(tape):
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1
        )
        dw += x[:, t].T @ dz
        du += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ w.T
        dh_next = dz @ u.T
        dc_next = dc * f
    return dw, du, db, dx


def _check_lstm_input(p, x):
    if x.shape[2] != p.w_fwd.shape[0]:
        raise ShapeError(
            f"input feature width {x.shape[2]} does not match LSTM input size {p.w_fwd.shape[0]}"
        )


def forward_bilstm(p, x):
    """Hidden states ``[h_fwd_t; h_bwd_t]`` per timestep, shape ``(..., T, 2H)``."""
    xb, single = _as_batch(x)
    _check_lstm_input(p, xb)
    hf, _ = _lstm_forward(p.w_fwd, p.u_fwd, p.b_fwd, xb, reverse=False)
    hb, _ = _lstm_forward(p.w_bwd, p.u_bwd, p.b_bwd, xb, reverse=True)
    out = np.concatenate([hf, hb], axis=2)
    return out[0] if single else out


# ----------------------------------------------------------------------------
# attention


def _attention_forward(p, hseq):
    h, width, dk = p.w_q.shape
    if hseq.shape[2] != width:
        raise ShapeError(f"attention expects width {width}, got {hseq.shape[2]}")
    q = np.einsum("btm,hmk->bhtk", hseq, p.w_q)
    k = np.einsum("btm,hmk->bhtk", hseq, p.w_k)
    v = np.einsum("btm,hmk->bhtk", hseq, p.w_v)
    scale = 1.0 / math.sqrt(dk)
    a = softmax_rows(np.einsum("bhtk,bhsk->bhts", q, k) * scale)
    heads = np.einsum("bhts,bhsk->bhtk", a, v)
    bsz, _, steps, _ = heads.shape
    concat = heads.transpose(0, 2, 1, 3).reshape(bsz, steps, h * dk)
    out = concat @ p.w_o
    return out, (hseq, q, k, v, a, concat, scale)


def _attention_backward(p, tape, dout):
    hseq, q, k, v, a, concat, scale = tape
    h, width, dk = p.w_q.shape
    bsz, steps, _ = dout.shape
    dw_o = np.einsum("btk,btm->km", concat, dout)
    dheads = (dout @ p.w_o.T).reshape(bsz, steps, h, dk).transpose(0, 2, 1, 3)
    da = np.einsum("bhtk,bhsk->bhts", dheads, v)
    dv = np.einsum("bhts,bhtk->bhsk", a, dheads)
    ds = a * (da - np.sum(da * a, axis=-1, keepdims=True)) * scale
    dq = np.einsum("bhts,bhsk->bhtk", ds, k)
    dk_ = np.einsum("bhts,bhtk->bhsk", ds, q)
    grads = AttentionParams(
        w_q=np.einsum("btm,bhtk->hmk", hseq, dq),
        w_k=np.einsum("btm,bhtk->hmk", hseq, dk_),
        w_v=np.einsum("btm,bhtk->hmk", hseq, dv),
        w_o=dw_o,
    )
    dh = (
        np.einsum("bhtk,hmk->btm", dq, p.w_q)
        + np.einsum("bhtk,hmk->btm", dk_, p.w_k)
        + np.einsum("bhtk,hmk->btm", dv, p.w_v)
    )
    return grads, dh


def _dropout_mask(shape, rate, rng, training):
    if not training or rate <= 0.0:
        return None
    if rng is None:
        raise InputError("a random generator is required for dropout during training")
    return (rng.random(shape) >= rate) / (1.0 - rate)


def attention_weights(p, hseq):
    """Per-head attention maps, shape ``(..., h, T, T)``; rows sum to one."""
    hb, single = _as_batch(hseq)
    _, tape = _attention_forward(p, hb)
    return tape[4][0] if single else tape[4]


def multi_head_attention(p, hseq, dropout=0.0, rng=None, training=False):
    """Scaled dot-product self-attention over ``hseq`` with output projection."""
    hb, single = _as_batch(hseq)
    h, width, _ = p.w_q.shape
    if width % h:
        raise ConfigError(f"{h} heads do not divide the attention width {width}")
    out, _ = _attention_forward(p, hb)
    mask = _dropout_mask(out.shape, dropout, rng, training)
    if mask is not None:
        out = out * mask
    return out[0] if single else out


# ----------------------------------------------------------------------------
# full model


@dataclass
class ForwardCache:
    params: ModelParams
    version: int
    x: np.ndarray
    lstm_tapes: tuple
    hseq: np.ndarray
    attn_tape: tuple | None
    mask: np.ndarray | None
    pooled: np.ndarray
    yhat: np.ndarray
    single: bool
    consumed: bool = False


def forward_model(params, cfg, x, rng=None, training=False):
    """Return ``(yhat, cache)``; ``yhat`` is a float for a single sequence."""
    xb, single = _as_batch(x)
    if xb.shape[1:] != (cfg.seq_len, cfg.input_dim):
        raise ShapeError(
            f"input shape {xb.shape[1:]} does not match model (T={cfg.seq_len}, d={cfg.input_dim})"
        )
    lp = params.lstm
    _check_lstm_input(lp, xb)
    hf, tape_f = _lstm_forward(lp.w_fwd, lp.u_fwd, lp.b_fwd, xb, reverse=False)
    hb, tape_b = _lstm_forward(lp.w_bwd, lp.u_bwd, lp.b_bwd, xb, reverse=True)
    hseq = np.concatenate([hf, hb], axis=2)

    attn_tape = None
    mask = None
    if params.attention is not None:
        seq_out, attn_tape = _attention_forward(params.attention, hseq)
        mask = _dropout_mask(seq_out.shape, cfg.dropout_rate, rng, training)
        if mask is not None:
            seq_out = seq_out * mask
    else:
        seq_out = hseq
    pooled = seq_out.mean(axis=1)
    logits = pooled @ params.head.w + params.head.b[0]
    yhat = sigmoid(logits)
    yhat = np.atleast_1d(yhat)
    cache = ForwardCache(
        params=params, version=params.version, x=xb, lstm_tapes=(tape_f, tape_b), hseq=hseq,
        attn_tape=attn_tape, mask=mask, pooled=pooled, yhat=yhat, single=single,
    )
    return (float(yhat[0]) if single else yhat), cache


def predict_proba(params, cfg, x, batch_size=256):
    """Inference-mode probabilities for a ``(N, T, d)`` array."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], batch_size):
        yhat, _ = forward_model(params, cfg, x[start:start + batch_size], training=False)
        out[start:start + batch_size] = yhat
    return out


def bce_loss(y, yhat):
    """Binary cross-entropy with ``yhat`` clamped to ``[1e-12, 1 - 1e-12]``."""
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(yhat, dtype=np.float64), LOSS_EPS, 1.0 - LOSS_EPS)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    if loss.ndim == 0:
        return float(loss)
    return loss


def backward_model(cache, y):
    """Gradients of the summed BCE loss over the cached batch.

    The cache is single-use and is rejected once the parameters it was built
    from have been updated.
    """
    if cache.consumed:
        raise StaleCacheError("forward cache already consumed by a backward pass")
    if cache.params.version != cache.version:
        raise StaleCacheError("parameters changed since the forward pass")
    cache.consumed = True
    params = cache.params
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y.shape != cache.yhat.shape:
        raise ShapeError(f"labels shape {y.shape} does not match batch {cache.yhat.shape}")

    yhat = cache.yhat
    # d/dlogit of BCE is yhat - y; zero where the probability clamp is active
    inside = (yhat > LOSS_EPS) & (yhat < 1.0 - LOSS_EPS)
    dlogit = np.where(inside, yhat - y, 0.0)

    head = OutputHead(w=cache.pooled.T @ dlogit, b=np.array([dlogit.sum()]))
    dpooled = dlogit[:, None] * params.head.w[None, :]
    steps = cache.hseq.shape[1]
    dseq = np.repeat(dpooled[:, None, :], steps, axis=1) / steps

    attention = None
    if params.attention is not None:
        if cache.mask is not None:
            dseq = dseq * cache.mask
        attention, dhseq = _attention_backward(params.attention, cache.attn_tape, dseq)
    else:
        dhseq = dseq

    lp = params.lstm
    hid = lp.u_fwd.shape[0]
    tape_f, tape_b = cache.lstm_tapes
    dwf, duf, dbf, _ = _lstm_backward(lp.w_fwd, lp.u_fwd, cache.x, tape_f, dhseq[:, :, :hid])
    dwb, dub, dbb, _ = _lstm_backward(lp.w_bwd, lp.u_bwd, cache.x, tape_b, dhseq[:, :, hid:])
    lstm = LstmParams(w_fwd=dwf, u_fwd=duf, b_fwd=dbf, w_bwd=dwb, u_bwd=dub, b_bwd=dbb)
    return ModelParams(lstm=lstm, attention=attention, head=head)


# ----------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, scale=1.0):
    """Bias-corrected Adam update applied in place; ``grads`` is multiplied by ``scale``.

    Returns ``(params, state)`` for convenience.
    """
    p_arrays = params.named_arrays()
    g_arrays = grads.named_arrays()
    if p_arrays.keys() != g_arrays.keys():
        raise ShapeError(f"gradient set {sorted(g_arrays)} does not mirror parameters {sorted(p_arrays)}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in p_arrays.items():
        g = g_arrays[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if scale != 1.0:
            g = g * scale
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    params.version += 1
    return params, state


# ----------------------------------------------------------------------------
# checkpoints


def params_to_dict(params):
    return {
        name: {"shape": list(a.shape), "data": a.ravel().tolist()}
        for name, a in params.named_arrays().items()
    }


def params_from_dict(d):
    arrays = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in d.items()
    }
    return params_from_arrays(arrays)


def save_checkpoint(path, cfg, params, preprocessing=None, extra=None):
    """JSON checkpoint.  Floats use Python's shortest round-trip repr, so reloading is bit-exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "params": params_to_dict(params),
        "preprocessing": preprocessing or {},
        "extra": extra or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def load_checkpoint(path):
    """Return ``(cfg, params, preprocessing, extra)``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise InputError(f"{path} is not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = ModelConfig(**doc["config"])
    return cfg, params_from_dict(doc["params"]), doc.get("preprocessing", {}), doc.get("extra", {})
