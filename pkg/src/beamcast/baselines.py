"""Recurrent sequence baselines: RNN, GRU, LSTM.

Architecture: linear input map 4 -> 32, four stacked recurrent layers of
width 32, and a per-step linear readout 32 -> M. The history columns are
encoded step by step; future steps continue the recurrence with the last
observed input column replayed. The gate blocks use the common double-bias
parameterization (separate input and hidden biases), so per-layer parameter
counts scale exactly 1 : 3 : 4 across RNN : GRU : LSTM.
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .errors import CheckpointError, ConfigError, ShapeError
from .reprogram import BeamPrediction, _softmax_cols
from .tensor import ParamDict, Tensor, no_grad

GATES = {"rnn": 1, "gru": 3, "lstm": 4}


@dataclass
class RecurrentConfig:
    kind: str = "lstm"
    n_beams: int = 32
    t_hist: int = 8
    t_pred: int = 5
    input_dim: int = 4
    hidden: int = 32
    n_layers: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GATES:
            raise ConfigError(f"kind must be one of {sorted(GATES)}, got {self.kind!r}")

    @classmethod
    def for_mode(cls, kind, mode, **kw):
        if mode == "standard":
            return cls(kind=kind, t_hist=8, t_pred=5, **kw)
        if mode == "fewshot":
            return cls(kind=kind, t_hist=3, t_pred=10, **kw)
        raise ConfigError(f"unknown mode {mode!r}")

    @property
    def mode(self):
        if (self.t_hist, self.t_pred) == (8, 5):
            return "standard"
        if (self.t_hist, self.t_pred) == (3, 10):
            return "fewshot"
        return "custom"


class RecurrentModel:
    """Stacked RNN/GRU/LSTM classifier over bounding-box feature columns."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.kind = cfg.kind
        h = cfg.hidden
        g = GATES[cfg.kind]
        rng = np.random.default_rng(cfg.seed)
        k = 1.0 / np.sqrt(h)

        p = ParamDict()

        def uniform(name, shape):
            return p.add(name, rng.uniform(-k, k, size=shape))

        self.w_in = uniform("input.w", (cfg.input_dim, h))
        self.b_in = uniform("input.b", (h,))
        self.layers = []
        for i in range(cfg.n_layers):
            pre = f"{cfg.kind}{i}."
            self.layers.append(
                {
                    "w_ih": uniform(pre + "w_ih", (h, g * h)),
                    "w_hh": uniform(pre + "w_hh", (h, g * h)),
                    "b_ih": uniform(pre + "b_ih", (g * h,)),
                    "b_hh": uniform(pre + "b_hh", (g * h,)),
                }
            )
        self.w_ro = uniform("readout.w", (h, cfg.n_beams))
        self.b_ro = uniform("readout.b", (cfg.n_beams,))

        self.trainables = p
        self.params = p

    def _cell(self, layer, x, h, c):
        """One recurrence step; returns (h', c') with c unused except by LSTM."""
        hid = self.cfg.hidden
        gi = T.add(T.matmul(x, layer["w_ih"].tensor), layer["b_ih"].tensor)
        gh = T.add(T.matmul(h, layer["w_hh"].tensor), layer["b_hh"].tensor)
        if self.kind == "rnn":
            return T.tanh_(T.add(gi, gh)), c
        if self.kind == "gru":
            r = T.sigmoid(T.add(gi[:, :hid], gh[:, :hid]))
            z = T.sigmoid(T.add(gi[:, hid : 2 * hid], gh[:, hid : 2 * hid]))
            n = T.tanh_(T.add(gi[:, 2 * hid :], T.mul(r, gh[:, 2 * hid :])))
            one_minus_z = T.add(1.0, T.mul(z, -1.0))
            return T.add(T.mul(one_minus_z, n), T.mul(z, h)), c
        gates = T.add(gi, gh)
        i = T.sigmoid(gates[:, :hid])
        f = T.sigmoid(gates[:, hid : 2 * hid])
        g = T.tanh_(gates[:, 2 * hid : 3 * hid])
        o = T.sigmoid(gates[:, 3 * hid :])
        c2 = T.add(T.mul(f, c), T.mul(i, g))
        return T.mul(o, T.tanh_(c2)), c2

    def forward_batch(self, histories):
        """[n, 4, T_hist] histories -> [n, T_pred, M] logits."""
        hist = np.asarray(histories, dtype=np.float64)
        if hist.ndim != 3 or hist.shape[1:] != (self.cfg.input_dim, self.cfg.t_hist):
            raise ShapeError(
                f"expected histories of shape [n, {self.cfg.input_dim}, {self.cfg.t_hist}], got {hist.shape}"
            )
        if not np.all(np.isfinite(hist)):
            raise ValueError("history values must be finite")
        n = hist.shape[0]
        hid = self.cfg.hidden
        zero = Tensor._wrap(np.zeros((n, hid)), ())
        hs = [zero for _ in self.layers]
        cs = [zero for _ in self.layers]

        def advance(col):
            x = T.add(T.matmul(col, self.w_in.tensor), self.b_in.tensor)
            for li, layer in enumerate(self.layers):
                hs[li], cs[li] = self._cell(layer, x, hs[li], cs[li])
                x = hs[li]
            return x

        for t in range(self.cfg.t_hist):
            col = Tensor._wrap(hist[:, :, t], ())
            top = advance(col)
        last_col = Tensor._wrap(hist[:, :, -1], ())
        logits = []
        for _ in range(self.cfg.t_pred):
            top = advance(last_col)
            step = T.add(T.matmul(top, self.w_ro.tensor), self.b_ro.tensor)
            logits.append(T.reshape(step, (n, 1, self.cfg.n_beams)))
        return T.concat(logits, axis=1)

    def forward(self, history):
        with no_grad():
            logits = self.forward_batch(np.asarray(history)[None]).data[0]
        scores = logits.T.copy()
        return BeamPrediction(scores=scores, probs=_softmax_cols(scores))

    def predict_batch(self, histories):
        with no_grad():
            logits = self.forward_batch(histories).data
        out = []
        for i in range(logits.shape[0]):
            scores = logits[i].T.copy()
            out.append(BeamPrediction(scores=scores, probs=_softmax_cols(scores)))
        return out

    def manifest_meta(self):
        return {"model": self.kind, "mode": self.cfg.mode, **asdict(self.cfg)}

    @classmethod
    def from_meta(cls, meta):
        if meta.get("model") not in GATES:
            raise CheckpointError(f"manifest model {meta.get('model')!r} is not a recurrent kind")
        fields = {k: meta[k] for k in (
            "kind", "n_beams", "t_hist", "t_pred", "input_dim", "hidden", "n_layers", "seed"
        )}
        return cls(RecurrentConfig(**fields))


def forward_recurrent(model, history, t_pred=None):
    """Spec-shaped helper: one window in, BeamPrediction out."""
    if t_pred is not None and t_pred != model.cfg.t_pred:
        raise ConfigError(
            f"model decodes {model.cfg.t_pred} steps, requested {t_pred}"
        )
    return model.forward(history)


def count_params(model):
    """(total, trainable) parameter counts from shapes."""
    total = sum(p.tensor.data.size for p in model.params)
    trainable = sum(p.tensor.data.size for p in model.params if p.trainable)
    return total, trainable
