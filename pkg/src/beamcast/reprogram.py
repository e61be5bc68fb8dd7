"""The reprogrammed-frozen-transformer beam predictor.

Pipeline per input channel (the four bounding-box feature rows, processed
independently): instance normalization -> replication-padded patching ->
linear patch embedding -> multi-head cross-attention against a learned bank
of text prototypes -> optional embedded prompt prefix -> frozen backbone ->
flatten projection to one value per future step. A small fusion MLP then
maps the four per-channel values of each future step to beam logits.

Prompt numbers are rendered in fixed-width scientific notation so a given
prediction mode always tokenizes to the same prompt length, which lets
training batch many (sample, channel) sequences through the backbone at
once while staying numerically identical to the one-sample path.
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .backbone import Backbone, BackboneConfig, PromptText, tokenize
from .checkpoint import load_checkpoint
from .errors import CheckpointError, ConfigError, ShapeError
from .tensor import ParamDict, Tensor, no_grad

REVIN_EPS = 1e-5
INIT_STD = 0.02

CHANNEL_NAMES = ("xc", "yc", "w", "h")


def revin_normalize(row, eps=REVIN_EPS):
    """Standardize a 1-D window to mean 0 / variance 1 (population stats).

    Returns (normalized, mean, std) with std = sqrt(var + eps) so the
    transform is exactly invertible even for constant rows.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size < 2:
        raise ShapeError("revin_normalize expects a 1-D row of length >= 2")
    mean = row.mean()
    std = np.sqrt(row.var() + eps)
    return (row - mean) / std, float(mean), float(std)


def revin_invert(normalized, mean, std):
    """Undo revin_normalize."""
    return np.asarray(normalized, dtype=np.float64) * std + mean


@dataclass
class PatchConfig:
    patch_len: int = 4
    stride: int = 2
    embed_dim: int = 32

    def n_patches(self, t_hist):
        if not (1 <= self.patch_len <= t_hist):
            raise ConfigError(
                f"patch_len must lie in [1, t_hist={t_hist}], got {self.patch_len}"
            )
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        return (t_hist - self.patch_len) // self.stride + 2

    def window_indices(self, t_hist):
        """Index matrix [P, patch_len] into the unpadded row.

        Replication padding (stride copies of the last value) is realized by
        clamping indices at t_hist - 1.
        """
        p = self.n_patches(t_hist)
        starts = np.arange(p)[:, None] * self.stride
        idx = starts + np.arange(self.patch_len)[None, :]
        return np.minimum(idx, t_hist - 1)


def patchify(row, t_hist, cfg):
    """Split a length-t_hist row into cfg.n_patches(t_hist) patches."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (t_hist,):
        raise ShapeError(f"expected a row of length {t_hist}, got {row.shape}")
    return row[cfg.window_indices(t_hist)]


def autocorr_top_lags(row, k=3):
    """Lags 1..T-1 ranked by |autocorrelation|, ties to the lower lag.

    Zero-variance rows define every autocorrelation as 0. Returns the first
    min(k, T-1) lags.
    """
    row = np.asarray(row, dtype=np.float64)
    t = row.size
    centered = row - row.mean()
    denom = float(np.dot(centered, centered))
    lags = np.arange(1, t)
    if denom == 0.0:
        strength = np.zeros(t - 1)
    else:
        strength = np.array(
            [abs(float(np.dot(centered[:-l], centered[l:])) / denom) for l in lags]
        )
    order = sorted(range(t - 1), key=lambda i: (-strength[i], lags[i]))
    return [int(lags[i]) for i in order[: min(k, t - 1)]]


def _fmt(v):
    # Fixed-width 4-significant-digit rendering keeps token counts constant.
    return f"{v:.3e}"


def build_prompt(window, channel, t_pred):
    """Deterministic prompt for one channel of an observation window.

    `window` is the raw 4 x T_hist history; statistics come from the
    unnormalized channel row.
    """
    window = np.asarray(window, dtype=np.float64)
    row = window[channel]
    t_hist = row.size
    last_minus_first = row[-1] - row[0]
    trend = "up" if last_minus_first > 0 else ("down" if last_minus_first < 0 else "flat")
    lags = autocorr_top_lags(row)
    stats = (
        f"min {_fmt(row.min())} max {_fmt(row.max())} median {_fmt(np.median(row))} "
        f"trend {trend} lags {' '.join(str(l) for l in lags)}"
    )
    return PromptText(
        dataset_desc="v2i mmwave bounding box series",
        task_desc=f"predict next {t_pred} beams from {t_hist} steps of {CHANNEL_NAMES[channel]}",
        stats_desc=stats,
    )


@dataclass
class BeamPrediction:
    """Per-step beam scores (logits) and probabilities, both M x T_pred."""

    scores: np.ndarray
    probs: np.ndarray

    @property
    def n_beams(self):
        return self.scores.shape[0]

    @property
    def t_pred(self):
        return self.scores.shape[1]


def predict_beams(pred):
    """Per-step argmax beam indices; ties break to the lowest index."""
    return np.argmax(pred.scores, axis=0)


def _softmax_cols(scores):
    z = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@dataclass
class BeamLLMConfig:
    n_beams: int = 32
    t_hist: int = 8
    t_pred: int = 5
    patch: PatchConfig = None
    n_heads: int = 4
    n_prototypes: int = 64
    pap_enabled: bool = True
    seed: int = 0
    backbone: BackboneConfig = None

    def __post_init__(self):
        if self.patch is None:
            self.patch = PatchConfig()
        if self.backbone is None:
            self.backbone = BackboneConfig(seed=self.seed)
        if self.patch.embed_dim % self.n_heads != 0:
            raise ConfigError(
                f"embed_dim {self.patch.embed_dim} not divisible by n_heads {self.n_heads}"
            )

    @classmethod
    def standard(cls, **kw):
        kw.setdefault("patch", PatchConfig(patch_len=4, stride=2, embed_dim=32))
        return cls(t_hist=8, t_pred=5, **kw)

    @classmethod
    def fewshot(cls, **kw):
        kw.setdefault("patch", PatchConfig(patch_len=2, stride=1, embed_dim=32))
        return cls(t_hist=3, t_pred=10, **kw)

    @classmethod
    def for_mode(cls, mode, **kw):
        if mode == "standard":
            return cls.standard(**kw)
        if mode == "fewshot":
            return cls.fewshot(**kw)
        raise ConfigError(f"unknown mode {mode!r}")

    @property
    def mode(self):
        if (self.t_hist, self.t_pred) == (8, 5):
            return "standard"
        if (self.t_hist, self.t_pred) == (3, 10):
            return "fewshot"
        return "custom"


class BeamLLM:
    """Beam predictor around a frozen transformer backbone."""

    kind = "beamllm"

    def __init__(self, cfg, backbone=None):
        self.cfg = cfg
        self.backbone = backbone if backbone is not None else Backbone(cfg.backbone)
        d_model = self.backbone.cfg.hidden
        d_emb = cfg.patch.embed_dim
        self.n_patches = cfg.patch.n_patches(cfg.t_hist)
        self.d_head = d_emb // cfg.n_heads
        rng = np.random.default_rng(cfg.seed + 1)  # offset: backbone consumes cfg.seed

        p = ParamDict()

        def linear(name, fan_in, shape):
            # fan-in-scaled uniform init keeps the cross-attention scores at
            # O(1) so the adapters train from the start
            bound = 1.0 / np.sqrt(fan_in)
            return p.add(name, rng.uniform(-bound, bound, size=shape))

        def zeros(name, shape):
            return p.add(name, np.zeros(shape))

        self.w_embed = linear("embed.w", cfg.patch.patch_len, (cfg.patch.patch_len, d_emb))
        self.b_embed = zeros("embed.b", (d_emb,))
        self.w_proto = linear(
            "proto.w", self.backbone.cfg.vocab_size,
            (self.backbone.cfg.vocab_size, cfg.n_prototypes),
        )
        self.heads = []
        for k in range(cfg.n_heads):
            self.heads.append(
                {
                    "wq": linear(f"reprogram.head{k}.wq", d_emb, (d_emb, self.d_head)),
                    "wk": linear(f"reprogram.head{k}.wk", d_model, (d_model, self.d_head)),
                    "wv": linear(f"reprogram.head{k}.wv", d_model, (d_model, self.d_head)),
                }
            )
        self.w_reprog_out = linear("reprogram.w_out", d_emb, (d_emb, d_model))
        self.w_flat = linear(
            "flatten.w", self.n_patches * d_model, (self.n_patches * d_model, cfg.t_pred)
        )
        self.w_fc1 = linear("fusion.w1", 4, (4, 16))
        self.b_fc1 = zeros("fusion.b1", (16,))
        self.w_fc2 = linear("fusion.w2", 16, (16, 32))
        self.b_fc2 = zeros("fusion.b2", (32,))
        self.w_fc3 = linear("fusion.w3", 32, (32, cfg.n_beams))
        self.b_fc3 = zeros("fusion.b3", (cfg.n_beams,))

        self.trainables = p
        self.params = ParamDict().merge(p).merge(self.backbone.params)
        self._patch_idx = cfg.patch.window_indices(cfg.t_hist)
        self._prompt_cache = {}

    # -- prompt plumbing -------------------------------------------------

    def prompt_ids(self, window, channel):
        """Token ids for one channel's prompt, cached by window content."""
        key = (np.asarray(window[channel]).tobytes(), channel)
        ids = self._prompt_cache.get(key)
        if ids is None:
            text = build_prompt(window, channel, self.cfg.t_pred).joined()
            ids = tokenize(text, self.backbone.cfg.vocab_size)
            self._prompt_cache[key] = ids
        return ids

    def prototypes(self):
        """E' = W_proto^T E as a tape node; recompute once per loss/forward."""
        e_const = Tensor._wrap(self.backbone.vocab.tensor.data, ())
        return T.matmul(T.transpose(self.w_proto.tensor), e_const)

    def reprogram(self, emb, protos):
        """Cross-attention from patch embeddings to text prototypes.

        emb: [n, P, d_emb]; protos: [V', D]. Per head: queries from patches,
        keys/values from prototypes, scaled dot-product attention; heads are
        concatenated and projected back to the backbone width.
        """
        scale = 1.0 / np.sqrt(self.d_head)
        outs = []
        for head in self.heads:
            q = T.matmul(emb, head["wq"].tensor)
            k = T.matmul(protos, head["wk"].tensor)
            v = T.matmul(protos, head["wv"].tensor)
            att = T.softmax(T.mul(T.matmul(q, T.swap_last(k)), scale), axis=-1)
            outs.append(T.matmul(att, v))
        z = T.concat(outs, axis=-1)
        return T.matmul(z, self.w_reprog_out.tensor)

    def _prefix_for(self, histories):
        """Embedded prompts for a [n, 4, T_hist] history batch -> [n*4, L, D].

        Fixed-width number rendering guarantees equal prompt lengths within
        a mode; that is asserted here because batching depends on it.
        """
        ids_all = []
        for window in histories:
            for c in range(4):
                ids_all.append(self.prompt_ids(window, c))
        lengths = {len(ids) for ids in ids_all}
        if len(lengths) != 1:
            raise ShapeError(f"prompt lengths differ within one batch: {sorted(lengths)}")
        flat = np.asarray(ids_all, dtype=np.int64)
        rows = self.backbone.vocab.tensor.data[flat]  # [n*4, L_pref, D]
        return Tensor._wrap(rows, ())

    # Backbone activations for ~4 samples (16 sequences) stay L2-resident;
    # larger batches go memory-bound, so big batches run in chunks whose
    # logits are concatenated on the tape (mathematically identical).
    MICRO_BATCH = 4

    def forward_batch(self, histories, protos=None):
        """Batched forward: [n, 4, T_hist] histories -> [n, T_pred, M] logits."""
        hist = np.asarray(histories, dtype=np.float64)
        if hist.ndim != 3 or hist.shape[1] != 4 or hist.shape[2] != self.cfg.t_hist:
            raise ShapeError(
                f"expected histories of shape [n, 4, {self.cfg.t_hist}], got {hist.shape}"
            )
        if not np.all(np.isfinite(hist)):
            raise ValueError("history values must be finite")
        n = hist.shape[0]
        if protos is None:
            protos = self.prototypes()
        if n <= self.MICRO_BATCH:
            return self._forward_chunk(hist, protos)
        parts = [
            self._forward_chunk(hist[i : i + self.MICRO_BATCH], protos)
            for i in range(0, n, self.MICRO_BATCH)
        ]
        return T.concat(parts, axis=0)

    def _forward_chunk(self, hist, protos):
        n = hist.shape[0]
        d_model = self.backbone.cfg.hidden
        x = Tensor._wrap(hist.reshape(n * 4, self.cfg.t_hist), ())
        normed, _, _ = T.standardize(x, eps=REVIN_EPS)
        patches = T.gather_last(normed, self._patch_idx)  # [n*4, P, L_p]
        emb = T.add(T.matmul(patches, self.w_embed.tensor), self.b_embed.tensor)
        rep = self.reprogram(emb, protos)  # [n*4, P, D]
        prefix = self._prefix_for(hist) if self.cfg.pap_enabled else None
        out = self.backbone.forward_with_prefix(prefix, rep)  # [n*4, P, D]
        flat = T.reshape(out, (n * 4, self.n_patches * d_model))
        per_step = T.matmul(flat, self.w_flat.tensor)  # [n*4, T_pred]
        chan = T.transpose(T.reshape(per_step, (n, 4, self.cfg.t_pred)), (0, 2, 1))
        f1 = T.relu(T.add(T.matmul(chan, self.w_fc1.tensor), self.b_fc1.tensor))
        f2 = T.relu(T.add(T.matmul(f1, self.w_fc2.tensor), self.b_fc2.tensor))
        return T.add(T.matmul(f2, self.w_fc3.tensor), self.b_fc3.tensor)

    def forward(self, history):
        """One 4 x T_hist window -> BeamPrediction (no gradient tape)."""
        with no_grad():
            logits = self.forward_batch(np.asarray(history)[None]).data[0]
        scores = logits.T.copy()  # [M, T_pred]
        return BeamPrediction(scores=scores, probs=_softmax_cols(scores))

    def predict_batch(self, histories):
        """Vectorized inference; returns a list of BeamPrediction."""
        with no_grad():
            logits = self.forward_batch(histories).data
        preds = []
        for i in range(logits.shape[0]):
            scores = logits[i].T.copy()
            preds.append(BeamPrediction(scores=scores, probs=_softmax_cols(scores)))
        return preds

    # -- persistence -----------------------------------------------------

    def manifest_meta(self):
        return {
            "model": self.kind,
            "mode": self.cfg.mode,
            "n_beams": self.cfg.n_beams,
            "t_hist": self.cfg.t_hist,
            "t_pred": self.cfg.t_pred,
            "patch": asdict(self.cfg.patch),
            "n_heads": self.cfg.n_heads,
            "n_prototypes": self.cfg.n_prototypes,
            "pap_enabled": self.cfg.pap_enabled,
            "seed": self.cfg.seed,
            "backbone_config": asdict(self.cfg.backbone),
        }

    @classmethod
    def from_meta(cls, meta):
        if meta.get("model") != cls.kind:
            raise CheckpointError(f"manifest is for model {meta.get('model')!r}, not {cls.kind!r}")
        cfg = BeamLLMConfig(
            n_beams=meta["n_beams"],
            t_hist=meta["t_hist"],
            t_pred=meta["t_pred"],
            patch=PatchConfig(**meta["patch"]),
            n_heads=meta["n_heads"],
            n_prototypes=meta["n_prototypes"],
            pap_enabled=meta["pap_enabled"],
            seed=meta["seed"],
            backbone=BackboneConfig(**meta["backbone_config"]),
        )
        return cls(cfg)
