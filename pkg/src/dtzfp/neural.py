"""Recurrent channel predictor: per-user LSTM/GRU modules with BPTT and Adam.

A module maps a normalized channel sample (encoded as the real 2-vector
``(re, im)``) through ``tanh`` input layer -> L recurrent layers -> linear
output, producing the one-step-ahead normalized prediction. A
:class:`PredictorBank` holds one module per user and applies the
``1/sqrt(beta)`` normalization and ``sqrt(beta)`` de-normalization around it.

Everything runs in float64 numpy; gradients are exact backpropagation
through time over the input window.
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .chest import estimate_normalized
from .errors import InvalidParameterError, NumericFaultError, TrainingDivergedError

log = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"CFPRED1\0"
WEIGHTS_VERSION = 1


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def to_real(z):
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1).astype(float)


def to_complex(v):
    return v[..., 0] + 1j * v[..., 1]


class RecurrentModule:
    """Input layer, ``num_layers`` recurrent layers of width ``hidden``, output layer."""

    def __init__(self, cell="lstm", num_layers=2, hidden=25, rng=None, params=None):
        if cell not in ("lstm", "gru"):
            raise InvalidParameterError(f"unknown cell type {cell!r}")
        self.cell = cell
        self.num_layers = num_layers
        self.hidden = hidden
        if params is None:
            rng = np.random.default_rng() if rng is None else rng
            params = self._init_params(rng)
        self.params = params

    def _shapes(self):
        H = self.hidden
        shapes = {"in.W": (H, 2), "in.b": (H,)}
        for l in range(self.num_layers):
            if self.cell == "lstm":
                shapes[f"l{l}.W"] = (4 * H, 2 * H)
                shapes[f"l{l}.b"] = (4 * H,)
            else:
                shapes[f"l{l}.Wzr"] = (2 * H, 2 * H)
                shapes[f"l{l}.bzr"] = (2 * H,)
                shapes[f"l{l}.Wn"] = (H, 2 * H)
                shapes[f"l{l}.bn"] = (H,)
        shapes["out.W"] = (2, H)
        shapes["out.b"] = (2,)
        return shapes

    def _init_params(self, rng):
        # uniform(+-1/sqrt(fan_in)); a bias shares the bound of its weight matrix
        params = {}
        bound = None
        for name, shape in self._shapes().items():
            if len(shape) == 2:
                bound = 1.0 / np.sqrt(shape[1])
            params[name] = rng.uniform(-bound, bound, size=shape)
        return params

    def copy(self):
        return RecurrentModule(self.cell, self.num_layers, self.hidden,
                               params={k: v.copy() for k, v in self.params.items()})

    def n_params(self):
        return sum(v.size for v in self.params.values())

    def init_state(self, batch_shape=()):
        shape = tuple(np.atleast_1d(batch_shape)) if batch_shape != () else ()
        z = np.zeros(shape + (self.hidden,))
        if self.cell == "lstm":
            return [(z.copy(), z.copy()) for _ in range(self.num_layers)]
        return [(z.copy(),) for _ in range(self.num_layers)]

    # -- forward ------------------------------------------------------------

    def step(self, x, state, cache=None):
        """Advance one time step. ``x`` has shape (..., 2)."""
        p = self.params
        a = np.tanh(x @ p["in.W"].T + p["in.b"])
        if cache is not None:
            cache.append(("in", x, a))
        H = self.hidden
        new_state = []
        inp = a
        for l, st in enumerate(state):
            h_prev = st[0]
            xh = np.concatenate([inp, h_prev], axis=-1)
            if self.cell == "lstm":
                c_prev = st[1]
                z = xh @ p[f"l{l}.W"].T + p[f"l{l}.b"]
                i = sigmoid(z[..., :H])
                f = sigmoid(z[..., H:2 * H])
                g = np.tanh(z[..., 2 * H:3 * H])
                o = sigmoid(z[..., 3 * H:])
                c = f * c_prev + i * g
                tc = np.tanh(c)
                h = o * tc
                new_state.append((h, c))
                if cache is not None:
                    cache.append(("lstm", xh, c_prev, i, f, g, o, tc))
            else:
                zr = sigmoid(xh @ p[f"l{l}.Wzr"].T + p[f"l{l}.bzr"])
                zg, r = zr[..., :H], zr[..., H:]
                xrh = np.concatenate([inp, r * h_prev], axis=-1)
                n = np.tanh(xrh @ p[f"l{l}.Wn"].T + p[f"l{l}.bn"])
                h = (1.0 - zg) * n + zg * h_prev
                new_state.append((h,))
                if cache is not None:
                    cache.append(("gru", xh, xrh, h_prev, zg, r, n))
            inp = h
        y = inp @ p["out.W"].T + p["out.b"]
        if cache is not None:
            cache.append(("out", inp))
        return y, new_state

    def run(self, X, state=None, keep_cache=False):
        """Run a sequence ``X`` of shape (T, B, 2). Returns (Y, final_state, cache)."""
        T, B = X.shape[:2]
        state = self.init_state(B) if state is None else state
        Y = np.empty((T, B, 2))
        caches = [] if keep_cache else None
        for t in range(T):
            c = [] if keep_cache else None
            Y[t], state = self.step(X[t], state, c)
            if keep_cache:
                caches.append(c)
        return Y, state, caches

    # -- backward -----------------------------------------------------------

    def backprop(self, caches, dY):
        """Gradients of sum(dY * Y) w.r.t. all parameters, given ``run`` caches."""
        p = self.params
        H = self.hidden
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        L = self.num_layers
        B = dY.shape[1]
        dh_next = [np.zeros((B, H)) for _ in range(L)]
        dc_next = [np.zeros((B, H)) for _ in range(L)]
        for t in reversed(range(len(caches))):
            cache = caches[t]
            h_top = cache[-1][1]
            dy = dY[t]
            grads["out.W"] += dy.T @ h_top
            grads["out.b"] += dy.sum(0)
            dinp = dy @ p["out.W"]
            for l in reversed(range(L)):
                entry = cache[1 + l]
                dh = dinp + dh_next[l]
                if entry[0] == "lstm":
                    _, xh, c_prev, i, f, g, o, tc = entry
                    do = dh * tc
                    dc = dc_next[l] + dh * o * (1.0 - tc ** 2)
                    dz = np.concatenate([dc * g * i * (1.0 - i),
                                         dc * c_prev * f * (1.0 - f),
                                         dc * i * (1.0 - g ** 2),
                                         do * o * (1.0 - o)], axis=-1)
                    grads[f"l{l}.W"] += dz.T @ xh
                    grads[f"l{l}.b"] += dz.sum(0)
                    dxh = dz @ p[f"l{l}.W"]
                    dc_next[l] = dc * f
                    dh_next[l] = dxh[:, H:]
                    dinp = dxh[:, :H]
                else:
                    _, xh, xrh, h_prev, zg, r, n = entry
                    dn = dh * (1.0 - zg)
                    dzg = dh * (h_prev - n)
                    dh_prev = dh * zg
                    dan = dn * (1.0 - n ** 2)
                    grads[f"l{l}.Wn"] += dan.T @ xrh
                    grads[f"l{l}.bn"] += dan.sum(0)
                    dxrh = dan @ p[f"l{l}.Wn"]
                    drh = dxrh[:, H:]
                    dr = drh * h_prev
                    dh_prev = dh_prev + drh * r
                    dazr = np.concatenate([dzg * zg * (1.0 - zg), dr * r * (1.0 - r)], axis=-1)
                    grads[f"l{l}.Wzr"] += dazr.T @ xh
                    grads[f"l{l}.bzr"] += dazr.sum(0)
                    dxh = dazr @ p[f"l{l}.Wzr"]
                    dh_next[l] = dh_prev + dxh[:, H:]
                    dinp = dxrh[:, :H] + dxh[:, :H]
            _, x, a = cache[0]
            da = dinp * (1.0 - a ** 2)
            grads["in.W"] += da.T @ x
            grads["in.b"] += da.sum(0)
        return grads


def forward(module, h_in, state=None):
    """One-step normalized prediction for complex input(s) ``h_in``.

    Returns ``(h_pred, new_state)``; the state is owned by the caller.
    """
    h_in = np.asarray(h_in)
    if not np.all(np.isfinite(h_in)):
        raise NumericFaultError("non-finite predictor input")
    state = module.init_state(h_in.shape) if state is None else state
    y, state = module.step(to_real(h_in), state)
    return to_complex(y), state


def loss_and_grads(module, inputs, targets):
    """Mean squared error of the final-step prediction and its gradients.

    ``inputs`` is (B, W) complex, ``targets`` is (B,) complex.
    """
    X = np.swapaxes(to_real(inputs), 0, 1)          # (W, B, 2)
    Y, _, caches = module.run(X, keep_cache=True)
    B = X.shape[1]
    err = Y[-1] - to_real(targets)
    loss = float(np.sum(err ** 2) / B)
    dY = np.zeros_like(Y)
    dY[-1] = 2.0 * err / B
    return loss, module.backprop(caches, dY)


def backward(module, inputs, targets):
    return loss_and_grads(module, inputs, targets)[1]


def predict_window(module, inputs):
    """Final-step predictions for windows ``inputs`` of shape (..., W), starting from zero state."""
    inputs = np.asarray(inputs)
    lead = inputs.shape[:-1]
    X = np.moveaxis(to_real(inputs.reshape(-1, inputs.shape[-1])), 1, 0)
    Y, _, _ = module.run(X)
    return to_complex(Y[-1]).reshape(lead)


# -- training ---------------------------------------------------------------

class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            params[k] -= self.lr * corr * self.m[k] / (np.sqrt(self.v[k]) + self.eps)


@dataclass
class Dataset:
    inputs: np.ndarray    # (N, W) complex, noisy normalized estimates
    targets: np.ndarray   # (N,) complex, value one sample (= one horizon) after the window

    def __len__(self):
        return len(self.targets)


@dataclass
class TrainingRun:
    loss_history: list = field(default_factory=list)
    epochs_run: int = 0
    converged: bool = False


def make_dataset(clean, window, snr_db, rng, length=None, target="clean"):
    """Sliding (window, target) pairs from traces ``clean`` of shape (..., T).

    The samples are spaced by the prediction horizon, so each target sits one
    sample after the end of its window. Inputs carry estimation noise at
    ``snr_db``; the target is the true future channel or, with
    ``target="noisy"``, the future estimate.
    """
    clean = np.asarray(clean).reshape(-1, np.shape(clean)[-1])
    T = clean.shape[1]
    if T <= window:
        raise InvalidParameterError(f"traces of length {T} cannot hold window {window} plus target")
    noisy = estimate_normalized(clean, snr_db, rng)
    ref = clean if target == "clean" else noisy
    starts = np.arange(T - window)
    idx = starts[:, None] + np.arange(window)
    inputs = noisy[:, idx].reshape(-1, window)
    targets = ref[:, starts + window].reshape(-1)
    if length is not None:
        if len(targets) < length:
            raise InvalidParameterError(f"traces yield {len(targets)} pairs, need {length}")
        inputs, targets = inputs[:length], targets[:length]
    return Dataset(inputs, targets)


def train(module, dataset, tcfg, rng, report=None):
    """Mini-batch Adam on the final-step MSE. Modifies ``module`` in place."""
    opt = Adam(module.params, tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps)
    run = TrainingRun()
    N = len(dataset)
    for epoch in range(tcfg.epochs):
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, tcfg.batch_size):
            sel = order[start:start + tcfg.batch_size]
            loss, grads = loss_and_grads(module, dataset.inputs[sel], dataset.targets[sel])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            opt.update(module.params, grads)
            total += loss * len(sel)
        mse = total / N
        if not all(np.all(np.isfinite(v)) for v in module.params.values()):
            raise TrainingDivergedError(epoch)
        run.loss_history.append(mse)
        run.epochs_run = epoch + 1
        if report is not None:
            report(epoch, mse)
        if mse < tcfg.target_mse:
            run.converged = True
            break
    log.debug("trained %d epochs, final mse %s", run.epochs_run,
              run.loss_history[-1] if run.loss_history else None)
    return run


def training_traces(doppler, horizon, window, n_pairs, rng):
    """Fresh normalized traces on the horizon grid, enough for ``n_pairs`` windows."""
    from .fading import gen_traces

    length = 2 * window
    count = -(-n_pairs // (length - window))
    return gen_traces(doppler, horizon, length, (count,), rng).samples


def train_modules(tcfg, doppler, horizon, rng, traces=None, num_users=1, num_aps=1,
                  report=None):
    """Train the predictor modules for a bank.

    ``tcfg.sharing`` picks how many parameter sets are trained: one shared by
    every link, one per user (``traces[..., k, :]``), or one per AP-user link
    (``traces[m, k, :]``, AP-major order). Without ``traces`` each module gets
    freshly generated ones. Returns ``(modules, runs)``.
    """
    if traces is not None:
        traces = np.asarray(traces)
    if tcfg.sharing == "per-user":
        groups = [None if traces is None else traces[..., k, :] for k in range(num_users)]
    elif tcfg.sharing == "per-link":
        groups = [None if traces is None else traces[m, k]
                  for m in range(num_aps) for k in range(num_users)]
    else:
        groups = [traces]
    modules, runs = [], []
    for tr in groups:
        # initialize before drawing data so initial weights depend on the seed alone
        mod = RecurrentModule(tcfg.cell, tcfg.num_layers, tcfg.hidden, rng)
        if tr is None:
            tr = training_traces(doppler, horizon, tcfg.window, tcfg.training_length, rng)
        data = make_dataset(tr, tcfg.window, tcfg.pilot_snr_db, rng,
                            tcfg.training_length, tcfg.target)
        runs.append(train(mod, data, tcfg, rng, report))
        modules.append(mod)
    return modules, runs


def nmse(pred, true):
    pred, true = np.asarray(pred), np.asarray(true)
    return float(np.mean(np.abs(pred - true) ** 2) / np.mean(np.abs(true) ** 2))


def write_training_csv(run, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mse"])
        for i, mse in enumerate(run.loss_history):
            w.writerow([i, repr(mse)])


# -- user bank --------------------------------------------------------------

class PredictorBank:
    """K user-specific modules plus their ``sqrt(beta)`` normalization factors.

    ``norm_factors`` has users on its last axis; leading axes (typically APs)
    are batched through the same per-user module, each with its own state.
    """

    def __init__(self, modules, norm_factors, horizon):
        norm_factors = np.asarray(norm_factors, dtype=float)
        if norm_factors.shape[-1] != len(modules):
            raise InvalidParameterError("one normalization factor per module required")
        if np.any(~(norm_factors > 0)):
            raise InvalidParameterError("normalization factors must be strictly positive")
        self.modules = list(modules)
        self.norm_factors = norm_factors
        self.horizon = horizon
        lead = norm_factors.shape[:-1]
        self.states = [mod.init_state(lead) for mod in self.modules]

    @classmethod
    def from_gains(cls, modules, beta, horizon):
        return cls(modules, np.sqrt(beta), horizon)

    def reset(self):
        lead = self.norm_factors.shape[:-1]
        self.states = [mod.init_state(lead) for mod in self.modules]


def predict_bank(bank, ghat):
    """Advance every user module by one estimate; returns the de-normalized predictions."""
    ghat = np.asarray(ghat)
    out = np.empty(ghat.shape, dtype=complex)
    for k, mod in enumerate(bank.modules):
        scale = bank.norm_factors[..., k]
        pred, bank.states[k] = forward(mod, ghat[..., k] / scale, bank.states[k])
        out[..., k] = scale * pred
    return out


def predict_bank_sequence(bank, ghat_history):
    """Feed a history (..., K, W) through the bank; returns the prediction after the last sample."""
    out = None
    for t in range(ghat_history.shape[-1]):
        out = predict_bank(bank, ghat_history[..., t])
    return out


# -- persistence ------------------------------------------------------------

_HEAD = struct.Struct("<8sIII8sId")


def save_modules(modules, path, horizon=0.0):
    first = modules[0]
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, first.num_layers, first.hidden,
                            first.cell.encode().ljust(8, b"\0"), len(modules), horizon))
        for mod in modules:
            for name in sorted(mod.params):
                arr = np.ascontiguousarray(mod.params[name], dtype="<f8")
                raw = name.encode()
                fh.write(struct.pack("<H", len(raw)) + raw)
                fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.tobytes())


def load_modules(path):
    """Returns (modules, horizon)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEAD.size:
        raise ValueError(f"{path}: truncated weight file")
    magic, version, L, H, cell, count, horizon = _HEAD.unpack_from(buf)
    if magic != WEIGHTS_MAGIC or version != WEIGHTS_VERSION:
        raise ValueError(f"{path}: not a predictor weight file")
    cell = cell.rstrip(b"\0").decode()
    pos = _HEAD.size
    modules = []
    for _ in range(count):
        template = RecurrentModule(cell, L, H, params={})
        params = {}
        for _ in range(len(template._shapes())):
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + n].decode()
            pos += n
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            size = int(np.prod(shape))
            params[name] = np.frombuffer(buf, "<f8", size, pos).reshape(shape).astype(float)
            pos += 8 * size
        if set(params) != set(template._shapes()):
            raise ValueError(f"{path}: tensor set does not match a {cell} module")
        template.params = params
        modules.append(template)
    return modules, horizon
