"""Single-layer LSTM binary classifier written directly in numpy.

Architecture: LSTM over the input sequence -> inverted dropout on the final
hidden state -> dense unit -> sigmoid. Gradients are derived by hand for
exactly this graph (backpropagation through time) and checked against
central finite differences by :func:`gradient_check`.

Gate order wherever gates are stacked is ``i, f, o, g``.

Shapes (H = hidden size, F = features, B = batch, T = window)::

    W_*: (H, F)   U_*: (H, H)   b_*: (H,)   dense_w: (H,)   dense_b: scalar
    inputs: (B, T, F) or a single (T, F) sequence
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .exceptions import SchemaError

GATES = ("i", "f", "o", "g")
PARAM_NAMES = (
    *(f"W_{g}" for g in GATES),
    *(f"U_{g}" for g in GATES),
    *(f"b_{g}" for g in GATES),
    "dense_w",
    "dense_b",
)
PROB_EPS = 1e-12
MODEL_FORMAT = "tornadocast-lstm"
MODEL_VERSION = 1


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def n_features(self) -> int:
        return self.W_i.shape[1]

    def to_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, arrays) -> "LstmParams":
        params = cls(**{name: np.asarray(arrays[name]) for name in PARAM_NAMES})
        params.validate()
        return params

    def copy(self) -> "LstmParams":
        return LstmParams(**{k: v.copy() for k, v in self.to_dict().items()})

    def astype(self, dtype) -> "LstmParams":
        return LstmParams(**{k: v.astype(dtype) for k, v in self.to_dict().items()})

    def validate(self) -> None:
        H, F = self.W_i.shape
        expected = {f"W_{g}": (H, F) for g in GATES}
        expected |= {f"U_{g}": (H, H) for g in GATES}
        expected |= {f"b_{g}": (H,) for g in GATES}
        expected |= {"dense_w": (H,), "dense_b": ()}
        for name, shape in expected.items():
            got = np.shape(getattr(self, name))
            if got != shape:
                raise SchemaError(f"{name} has shape {got}, expected {shape}")

    def stacked(self):
        W = np.concatenate([self.W_i, self.W_f, self.W_o, self.W_g])
        U = np.concatenate([self.U_i, self.U_f, self.U_o, self.U_g])
        b = np.concatenate([self.b_i, self.b_f, self.b_o, self.b_g])
        return W, U, b


def init_params(n_features: int, hidden_size: int, seed: int, dtype=np.float64) -> LstmParams:
    """Glorot-uniform weights, forget-gate bias 1, every other bias 0."""
    if n_features < 1 or hidden_size < 1:
        raise ValueError("n_features and hidden_size must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))

    def glorot(rows, cols):
        bound = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)

    arrays = {f"W_{g}": glorot(hidden_size, n_features) for g in GATES}
    arrays |= {f"U_{g}": glorot(hidden_size, hidden_size) for g in GATES}
    arrays |= {f"b_{g}": np.zeros(hidden_size, dtype=dtype) for g in GATES}
    arrays["b_f"][:] = 1.0
    arrays["dense_w"] = glorot(hidden_size, 1)[:, 0]
    arrays["dense_b"] = np.zeros((), dtype=dtype)
    return LstmParams(**arrays)


@dataclass
class ForwardTrace:
    """Everything backward() needs. Per-timestep arrays are (T, B, H)."""

    inputs: np.ndarray
    gates: np.ndarray  # (T, B, 4H) post-activation, order i f o g
    cells: np.ndarray  # (T + 1, B, H), cells[0] is the zero initial state
    hiddens: np.ndarray  # (T + 1, B, H)
    mask: np.ndarray  # (B, H), already scaled by 1 / (1 - rate)
    p: np.ndarray  # (B,)

    @property
    def h_final(self) -> np.ndarray:
        return self.hiddens[-1]


def _as_batch(inputs) -> np.ndarray:
    x = np.asarray(inputs)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise SchemaError(f"expected (T, F) or (B, T, F) input, got shape {x.shape}")
    return x


def dropout_mask(shape, rate: float, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    if rate <= 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / (1.0 - rate)


def lstm_forward(
    params: LstmParams,
    inputs,
    dropout_rate: float = 0.0,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    mask: np.ndarray | None = None,
) -> ForwardTrace:
    """Run the network on one sequence ``(T, F)`` or a batch ``(B, T, F)``.

    Dropout is active only when ``train_mode`` is true; pass ``mask`` to reuse a
    fixed dropout mask (e.g. for gradient checking).
    """
    x = _as_batch(inputs)
    B, T, F = x.shape
    if F != params.n_features:
        raise SchemaError(f"model expects {params.n_features} features, got {F}")
    H = params.hidden_size
    dtype = params.W_i.dtype
    x = x.astype(dtype, copy=False)
    W, U, b = params.stacked()

    gates = np.empty((T, B, 4 * H), dtype=dtype)
    cells = np.zeros((T + 1, B, H), dtype=dtype)
    hiddens = np.zeros((T + 1, B, H), dtype=dtype)
    for t in range(T):
        z = x[:, t, :] @ W.T + hiddens[t] @ U.T + b
        z[:, : 3 * H] = sigmoid(z[:, : 3 * H])
        z[:, 3 * H :] = np.tanh(z[:, 3 * H :])
        gates[t] = z
        i, f, o, g = z[:, :H], z[:, H : 2 * H], z[:, 2 * H : 3 * H], z[:, 3 * H :]
        cells[t + 1] = f * cells[t] + i * g
        hiddens[t + 1] = o * np.tanh(cells[t + 1])

    if mask is None:
        if train_mode and dropout_rate > 0.0:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng")
            mask = dropout_mask((B, H), dropout_rate, rng, dtype)
        else:
            mask = np.ones((B, H), dtype=dtype)
    logits = (hiddens[-1] * mask) @ params.dense_w + params.dense_b
    p = np.clip(sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS)
    return ForwardTrace(x, gates, cells, hiddens, mask, p)


def predict_proba(params: LstmParams, inputs, chunk: int = 8192) -> np.ndarray:
    """Inference-mode probabilities, evaluated in chunks to bound memory."""
    x = _as_batch(inputs)
    return np.concatenate(
        [lstm_forward(params, x[s : s + chunk]).p for s in range(0, len(x), chunk)]
    ) if len(x) else np.empty(0)


def bce_loss(p, y):
    """Binary cross-entropy ``-(y ln p + (1 - y) ln(1 - p))``, elementwise."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def backward(trace: ForwardTrace, params: LstmParams, y) -> dict[str, np.ndarray]:
    """Gradients of the batch-mean BCE loss with respect to every parameter."""
    y = np.asarray(y, dtype=trace.p.dtype).reshape(-1)
    T, B, H = trace.hiddens.shape[0] - 1, trace.p.shape[0], params.hidden_size
    _, U, _ = params.stacked()

    dlogit = (trace.p - y) / B
    h_drop = trace.h_final * trace.mask
    grads = {"dense_w": h_drop.T @ dlogit, "dense_b": np.asarray(dlogit.sum())}

    dW = np.zeros((4 * H, params.n_features), dtype=trace.p.dtype)
    dU = np.zeros((4 * H, H), dtype=trace.p.dtype)
    db = np.zeros(4 * H, dtype=trace.p.dtype)
    dh = np.outer(dlogit, params.dense_w) * trace.mask
    dc = np.zeros((B, H), dtype=trace.p.dtype)
    for t in range(T - 1, -1, -1):
        z = trace.gates[t]
        i, f, o, g = z[:, :H], z[:, H : 2 * H], z[:, 2 * H : 3 * H], z[:, 3 * H :]
        tc = np.tanh(trace.cells[t + 1])
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = np.empty_like(z)
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * trace.cells[t] * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H :] = dc * i * (1.0 - g * g)
        dW += dz.T @ trace.inputs[:, t, :]
        dU += dz.T @ trace.hiddens[t]
        db += dz.sum(axis=0)
        dh = dz @ U
        dc = dc * f

    for k, gate in enumerate(GATES):
        rows = slice(k * H, (k + 1) * H)
        grads[f"W_{gate}"] = dW[rows]
        grads[f"U_{gate}"] = dU[rows]
        grads[f"b_{gate}"] = db[rows]
    return grads


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values())))


def clip_by_global_norm(grads, max_norm: float):
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: v * scale for k, v in grads.items()}


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    t: int
    m: dict
    v: dict

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        arrays = params.to_dict() if isinstance(params, LstmParams) else params
        return cls(0, {k: np.zeros_like(v) for k, v in arrays.items()},
                   {k: np.zeros_like(v) for k, v in arrays.items()})


def adam_step(params, grads, state: AdamState | None = None, learning_rate=1e-3,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update.

    ``params`` is an :class:`LstmParams` or any mapping of name -> array; the
    same kind is returned along with the advanced state.
    """
    as_lstm = isinstance(params, LstmParams)
    arrays = params.to_dict() if as_lstm else params
    state = state or AdamState.zeros_like(arrays)
    t = state.t + 1
    m, v, new = {}, {}, {}
    for name, value in arrays.items():
        g = grads[name]
        m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m[name] / (1.0 - beta1**t)
        v_hat = v[name] / (1.0 - beta2**t)
        new[name] = value - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    out = LstmParams(**new) if as_lstm else new
    return out, AdamState(t, m, v)


# --------------------------------------------------------------------------
# Gradient check
# --------------------------------------------------------------------------


@dataclass
class GradientCheckReport:
    max_rel_error: float
    parameter: str
    index: tuple
    analytic: float
    numeric: float
    passed: bool
    per_parameter: dict


def _mean_loss(params, x, y, mask):
    trace = lstm_forward(params, x, mask=mask)
    return float(bce_loss(trace.p, y).mean())


def gradient_check(params: LstmParams, inputs, y, delta=1e-5, tolerance=1e-4,
                   mask=None, analytic=None, abs_floor=1e-6) -> GradientCheckReport:
    """Compare analytic gradients with central differences on every coordinate.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, abs_floor)``; the
    floor keeps coordinates whose true gradient is ~0 from dominating.
    ``analytic`` may be supplied to test externally produced gradients.
    """
    x = _as_batch(inputs).astype(np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if analytic is None:
        analytic = backward(lstm_forward(params, x, mask=mask), params, y)

    work = params.copy()
    arrays = work.to_dict()
    worst = (-1.0, "", (), 0.0, 0.0)
    per_param = {}
    for name in PARAM_NAMES:
        arr = arrays[name]
        ana = np.asarray(analytic[name])
        worst_here = 0.0
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + delta
            up = _mean_loss(work, x, y, mask)
            arr[idx] = orig - delta
            down = _mean_loss(work, x, y, mask)
            arr[idx] = orig
            num = (up - down) / (2.0 * delta)
            a = float(ana[idx])
            rel = abs(a - num) / max(abs(a), abs(num), abs_floor)
            worst_here = max(worst_here, rel)
            if rel > worst[0]:
                worst = (rel, name, idx, a, num)
        per_param[name] = worst_here
    rel, name, idx, a, num = worst
    return GradientCheckReport(rel, name, idx, a, num, rel < tolerance, per_param)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def params_to_document(params: LstmParams, **extra) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_features": params.n_features,
        "hidden_size": params.hidden_size,
        "dtype": str(params.W_i.dtype),
        "params": {
            name: {"shape": list(np.shape(arr)), "data": np.ravel(arr).tolist()}
            for name, arr in params.to_dict().items()
        },
    }
    doc.update(extra)
    return doc


def params_from_document(doc: dict) -> LstmParams:
    if doc.get("format") != MODEL_FORMAT:
        raise SchemaError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise SchemaError(f"unsupported model version {doc.get('version')!r}")
    dtype = np.dtype(doc.get("dtype", "float64"))
    H, F = int(doc["hidden_size"]), int(doc["n_features"])
    arrays = {}
    for name in PARAM_NAMES:
        entry = doc["params"].get(name)
        if entry is None:
            raise SchemaError(f"model document lacks parameter {name}")
        shape = tuple(entry["shape"])
        data = np.asarray(entry["data"], dtype=dtype)
        if data.size != int(np.prod(shape)):
            raise SchemaError(f"{name}: {data.size} values do not fill shape {shape}")
        arrays[name] = data.reshape(shape)
    params = LstmParams.from_dict(arrays)
    if params.hidden_size != H or params.n_features != F:
        raise SchemaError("parameter shapes disagree with the document header")
    return params


def save_params(params: LstmParams, path, **extra) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_document(params, **extra), fh)


def load_params(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return params_from_document(doc), doc
