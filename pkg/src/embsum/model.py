"""The extractive network: a bi-directional LSTM encoder over sentence
embeddings and a custom gated decoder that walks the document once, nudging a
running prediction of the summary embedding toward each sentence by a learned
scalar step size.

Per step i, with p = y_hat_{i-1}, s_i the encoder state and w the document
aggregate (sum of all sentence embeddings):

    alpha = cos(p, x_i)                beta = cos(p, w)
    fg    = sigmoid(W_fg [s_i; alpha; beta])
    ig    = sigmoid(W_ig [s_i; alpha; beta])
    og    = sigmoid(W_oxg x_i + W_ogy p)
    ct    = fg * p + ig * tanh(W_ct x_i)
    ht    = og * act(ct)               act is sigmoid by default, tanh optional
    score = sigmoid(w_sc . ht)
    y_hat_i = p - score * (p - x_i)

and the very first p is tanh(W_init tanh(w)).

Parameters are held in float64; checkpoints store float32 (which round-trips
exactly). All forward math is float64 so the convex-combination identity of
the update holds to machine precision.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit as sigmoid

from . import geometry

CHECKPOINT_MAGIC = b"USEM"
CHECKPOINT_VERSION = 1

CT_ACTIVATIONS = ("sigmoid", "tanh")

# Fixed parameter order: drives initialization draws, checkpoint layout, and
# optimizer state. Shapes are functions of (d, h).
PARAM_SHAPES = (
    ("enc_fwd_Wx", lambda d, h: (4 * h, d)),
    ("enc_fwd_Wh", lambda d, h: (4 * h, h)),
    ("enc_fwd_b", lambda d, h: (4 * h,)),
    ("enc_bwd_Wx", lambda d, h: (4 * h, d)),
    ("enc_bwd_Wh", lambda d, h: (4 * h, h)),
    ("enc_bwd_b", lambda d, h: (4 * h,)),
    ("W_fg", lambda d, h: (d, 2 * h + 2)),
    ("b_fg", lambda d, h: (d,)),
    ("W_ig", lambda d, h: (d, 2 * h + 2)),
    ("b_ig", lambda d, h: (d,)),
    ("W_oxg", lambda d, h: (d, d)),
    ("b_oxg", lambda d, h: (d,)),
    ("W_ogy", lambda d, h: (d, d)),
    ("b_ogy", lambda d, h: (d,)),
    ("W_ct", lambda d, h: (d, d)),
    ("b_ct", lambda d, h: (d,)),
    ("W_sc", lambda d, h: (1, d)),
    ("b_sc", lambda d, h: (1,)),
    ("W_init", lambda d, h: (d, d)),
    ("b_init", lambda d, h: (d,)),
)

PARAM_NAMES = tuple(name for name, _ in PARAM_SHAPES)


class ModelError(ValueError):
    pass


@dataclass
class ModelParams:
    d: int
    h: int
    ct_activation: str = "sigmoid"
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __getattr__(self, name):
        arrays = self.__dict__.get("arrays", {})
        if name in arrays:
            return arrays[name]
        raise AttributeError(name)

    def copy(self) -> "ModelParams":
        return ModelParams(self.d, self.h, self.ct_activation,
                           {k: v.copy() for k, v in self.arrays.items()})

    def validate(self) -> None:
        for name, shape_fn in PARAM_SHAPES:
            arr = self.arrays.get(name)
            expected = shape_fn(self.d, self.h)
            if arr is None or arr.shape != expected:
                raise ModelError(f"parameter {name}: expected shape {expected}, "
                                 f"got {None if arr is None else arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"parameter {name}: non-finite entries")


def init_params(d: int, h: int, seed: int, ct_activation: str = "sigmoid") -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if d < 1 or h < 1:
        raise ModelError("d and h must be >= 1")
    if ct_activation not in CT_ACTIVATIONS:
        raise ModelError(f"ct_activation must be one of {CT_ACTIVATIONS}")
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape_fn in PARAM_SHAPES:
        shape = shape_fn(d, h)
        if len(shape) == 1:  # bias
            arrays[name] = np.zeros(shape)
        else:
            fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(d=d, h=h, ct_activation=ct_activation, arrays=arrays)


# ---------------------------------------------------------------------------
# Encoder

@dataclass
class EncoderOutput:
    states: np.ndarray  # (L, 2h): [forward_i ; backward_i]


def _lstm_pass(Wx, Wh, b, xs):
    """Single-direction LSTM with zero initial state. Returns hidden states
    (L, h) and the tape needed for backprop."""
    L = xs.shape[0]
    h = Wh.shape[1]
    hs = np.zeros((L, h))
    tape = {"i": np.zeros((L, h)), "f": np.zeros((L, h)), "g": np.zeros((L, h)),
            "o": np.zeros((L, h)), "c": np.zeros((L, h)), "tc": np.zeros((L, h)),
            "xs": xs}
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for t in range(L):
        acts = Wx @ xs[t] + Wh @ h_prev + b
        ig = sigmoid(acts[0:h])
        fg = sigmoid(acts[h:2 * h])
        gg = np.tanh(acts[2 * h:3 * h])
        og = sigmoid(acts[3 * h:4 * h])
        c = fg * c_prev + ig * gg
        tc = np.tanh(c)
        h_t = og * tc
        tape["i"][t], tape["f"][t], tape["g"][t], tape["o"][t] = ig, fg, gg, og
        tape["c"][t], tape["tc"][t] = c, tc
        hs[t] = h_t
        h_prev, c_prev = h_t, c
    tape["hs"] = hs
    return hs, tape


def _lstm_backward(Wx, Wh, tape, dhs):
    """Backprop through _lstm_pass given gradients w.r.t. each hidden state.
    Input gradients are not needed (inputs are data)."""
    xs, hs = tape["xs"], tape["hs"]
    L, h = dhs.shape
    gWx = np.zeros_like(Wx)
    gWh = np.zeros_like(Wh)
    gb = np.zeros(4 * h)
    dh_carry = np.zeros(h)
    dc_carry = np.zeros(h)
    for t in range(L - 1, -1, -1):
        ig, fg, gg, og = tape["i"][t], tape["f"][t], tape["g"][t], tape["o"][t]
        tc = tape["tc"][t]
        c_prev = tape["c"][t - 1] if t > 0 else np.zeros(h)
        h_prev = hs[t - 1] if t > 0 else np.zeros(h)
        dh = dhs[t] + dh_carry
        do = dh * tc
        dc = dc_carry + dh * og * (1.0 - tc * tc)
        di = dc * gg
        df = dc * c_prev
        dg = dc * ig
        da = np.concatenate([di * ig * (1 - ig), df * fg * (1 - fg),
                             dg * (1 - gg * gg), do * og * (1 - og)])
        gWx += np.outer(da, xs[t])
        gWh += np.outer(da, h_prev)
        gb += da
        dh_carry = Wh.T @ da
        dc_carry = dc * fg
    return gWx, gWh, gb


def encode(params: ModelParams, doc, *, want_tape: bool = False):
    """Bi-directional encoder states for a document (or (L, d) array)."""
    X = geometry._as_matrix(doc).astype(np.float64, copy=False)
    if X.shape[1] != params.d:
        raise ModelError(f"document dim {X.shape[1]} != model d {params.d}")
    hs_f, tape_f = _lstm_pass(params.enc_fwd_Wx, params.enc_fwd_Wh, params.enc_fwd_b, X)
    hs_b_rev, tape_b = _lstm_pass(params.enc_bwd_Wx, params.enc_bwd_Wh,
                                  params.enc_bwd_b, X[::-1])
    states = np.concatenate([hs_f, hs_b_rev[::-1]], axis=1)
    out = EncoderOutput(states=states)
    if want_tape:
        return out, (tape_f, tape_b)
    return out


def encoder_backward(params: ModelParams, tapes, gstates):
    """Gradients of the six encoder parameter arrays given d(loss)/d(states)."""
    tape_f, tape_b = tapes
    h = params.h
    gWx_f, gWh_f, gb_f = _lstm_backward(params.enc_fwd_Wx, params.enc_fwd_Wh,
                                        tape_f, gstates[:, :h])
    gWx_b, gWh_b, gb_b = _lstm_backward(params.enc_bwd_Wx, params.enc_bwd_Wh,
                                        tape_b, gstates[::-1, h:])
    return {"enc_fwd_Wx": gWx_f, "enc_fwd_Wh": gWh_f, "enc_fwd_b": gb_f,
            "enc_bwd_Wx": gWx_b, "enc_bwd_Wh": gWh_b, "enc_bwd_b": gb_b}


# ---------------------------------------------------------------------------
# Decoder

def init_prediction(params: ModelParams, omega_vec) -> np.ndarray:
    """Initial prediction tanh(W_init tanh(omega)); entries lie in (-1, 1)."""
    w = np.asarray(omega_vec, dtype=np.float64)
    if np.linalg.norm(w) == 0.0:
        raise ModelError("omega is the zero vector; initial prediction undefined")
    return np.tanh(params.W_init @ np.tanh(w) + params.b_init)


def _ct_act(params, ct):
    if params.ct_activation == "tanh":
        return np.tanh(ct)
    return sigmoid(ct)


@dataclass
class StepRecord:
    alpha: float
    beta: float
    fg: np.ndarray
    ig: np.ndarray
    og: np.ndarray
    ct: np.ndarray
    ht: np.ndarray
    score: float


def decode_step(params: ModelParams, s_i, x_i, y_hat_prev, omega_vec):
    """One decoder step; returns (y_hat_i, StepRecord)."""
    s_i = np.asarray(s_i, dtype=np.float64)
    x_i = np.asarray(x_i, dtype=np.float64)
    p = np.asarray(y_hat_prev, dtype=np.float64)
    w = np.asarray(omega_vec, dtype=np.float64)
    alpha = geometry.cosine(p, x_i)
    beta = geometry.cosine(p, w)
    u = np.concatenate([s_i, [alpha, beta]])
    fg = sigmoid(params.W_fg @ u + params.b_fg)
    ig = sigmoid(params.W_ig @ u + params.b_ig)
    og = sigmoid(params.W_oxg @ x_i + params.b_oxg + params.W_ogy @ p + params.b_ogy)
    ct = fg * p + ig * np.tanh(params.W_ct @ x_i + params.b_ct)
    ht = og * _ct_act(params, ct)
    score = float(sigmoid(params.W_sc @ ht + params.b_sc)[0])
    y_hat = p - score * (p - x_i)
    return y_hat, StepRecord(alpha=alpha, beta=beta, fg=fg, ig=ig, og=og,
                             ct=ct, ht=ht, score=score)


@dataclass
class DecoderTrace:
    omega: np.ndarray        # (d,)
    y_hat_init: np.ndarray   # (d,)
    states: np.ndarray       # (L, 2h)
    alpha: np.ndarray        # (L,)
    beta: np.ndarray         # (L,)
    fg: np.ndarray           # (L, d)
    ig: np.ndarray
    og: np.ndarray
    ct: np.ndarray
    ht: np.ndarray
    score: np.ndarray        # (L,)
    y_hat: np.ndarray        # (L, d)

    @property
    def final_prediction(self) -> np.ndarray:
        return self.y_hat[-1]

    def __len__(self) -> int:
        return self.y_hat.shape[0]


def run_decoder(params: ModelParams, doc, *, want_tape: bool = False):
    """Full forward pass over a document: omega, initial prediction, encoder,
    then one decode step per sentence in document order."""
    X = geometry._as_matrix(doc).astype(np.float64, copy=False)
    L, d = X.shape
    if d != params.d:
        raise ModelError(f"document dim {d} != model d {params.d}")
    w = geometry.omega(X)
    y0 = init_prediction(params, w)
    enc = encode(params, X, want_tape=want_tape)
    if want_tape:
        enc, tapes = enc
    trace = DecoderTrace(
        omega=w, y_hat_init=y0, states=enc.states,
        alpha=np.zeros(L), beta=np.zeros(L),
        fg=np.zeros((L, d)), ig=np.zeros((L, d)), og=np.zeros((L, d)),
        ct=np.zeros((L, d)), ht=np.zeros((L, d)),
        score=np.zeros(L), y_hat=np.zeros((L, d)))
    p = y0
    for i in range(L):
        p, rec = decode_step(params, enc.states[i], X[i], p, w)
        trace.alpha[i], trace.beta[i] = rec.alpha, rec.beta
        trace.fg[i], trace.ig[i], trace.og[i] = rec.fg, rec.ig, rec.og
        trace.ct[i], trace.ht[i] = rec.ct, rec.ht
        trace.score[i] = rec.score
        trace.y_hat[i] = p
    if want_tape:
        return trace, tapes
    return trace


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(params: ModelParams, path, meta: dict | None = None) -> None:
    """Binary checkpoint (float32) plus a <path>.meta.json sidecar."""
    params.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    act = CT_ACTIVATIONS.index(params.ct_activation)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIIII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                             params.d, params.h, act))
        for name in PARAM_NAMES:
            fh.write(params.arrays[name].astype("<f4").tobytes())
    meta = dict(meta or {})
    meta.setdefault("param_digest", checkpoint_digest(path))
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True),
                                              encoding="utf-8")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    path = Path(path)
    raw = path.read_bytes()
    header = struct.Struct("<4sIIII")
    if len(raw) < header.size:
        raise ModelError(f"{path}: truncated checkpoint")
    magic, version, d, h, act = header.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ModelError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: unsupported version {version}")
    if act >= len(CT_ACTIVATIONS):
        raise ModelError(f"{path}: unknown ct_activation code {act}")
    flat = np.frombuffer(raw, dtype="<f4", offset=header.size)
    arrays = {}
    pos = 0
    for name, shape_fn in PARAM_SHAPES:
        shape = shape_fn(d, h)
        n = int(np.prod(shape))
        if pos + n > flat.size:
            raise ModelError(f"{path}: checkpoint truncated at parameter {name}")
        arrays[name] = flat[pos:pos + n].reshape(shape).astype(np.float64)
        pos += n
    if pos != flat.size:
        raise ModelError(f"{path}: {flat.size - pos} trailing values in checkpoint")
    meta_path = Path(str(path) + ".meta.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    return ModelParams(d=d, h=h, ct_activation=CT_ACTIVATIONS[act], arrays=arrays), meta


def checkpoint_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
