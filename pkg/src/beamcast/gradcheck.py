"""Central finite-difference oracle for verifying analytic gradients."""

import numpy as np

from .tensor import no_grad


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise |a - n| / max(|a|, |n|, floor); the floor keeps noise-level
    differences on near-zero gradients from registering as failures."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def finite_difference(loss_fn, array, h=1e-5):
    """Central-difference gradient of `loss_fn()` w.r.t. `array` (perturbed in place)."""
    grad = np.zeros_like(array)
    flat = array.flat
    gflat = grad.flat
    with no_grad():
        for i in range(array.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn())
            flat[i] = orig - h
            down = float(loss_fn())
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
    return grad


def check_parameters(loss_fn, params, h=1e-5, floor=1e-6):
    """Compare analytic and finite-difference gradients for each parameter.

    `loss_fn` rebuilds the scalar loss Tensor from the current parameter
    values. Returns {name: max relative error}.
    """
    params = list(params)
    for p in params:
        p.tensor.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {p.name: p.tensor.grad.copy() for p in params}
    errs = {}
    for p in params:
        numeric = finite_difference(lambda: loss_fn().data, p.tensor.data, h=h)
        errs[p.name] = float(relative_error(analytic[p.name], numeric, floor=floor).max())
    for p in params:
        p.tensor.zero_grad()
    return errs


def check_tensor_input(loss_fn, x, h=1e-5, floor=1e-6):
    """Like check_parameters but for a single input Tensor `x`."""
    x.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = x.grad.copy()
    numeric = finite_difference(lambda: loss_fn().data, x.data, h=h)
    x.zero_grad()
    return float(relative_error(analytic, numeric, floor=floor).max())


# -- end-to-end suites on deliberately tiny models ------------------------

TINY_BEAMLLM = dict(
    n_beams=4, t_hist=4, t_pred=2, patch_len=2, stride=2, embed_dim=8,
    n_heads=2, n_prototypes=8, vocab_size=50, hidden=16, n_layers=2,
    backbone_heads=2, max_seq=64,
)


def build_tiny_beamllm(seed=0, pap_enabled=True):
    from .backbone import BackboneConfig
    from .reprogram import BeamLLM, BeamLLMConfig, PatchConfig

    t = TINY_BEAMLLM
    cfg = BeamLLMConfig(
        n_beams=t["n_beams"],
        t_hist=t["t_hist"],
        t_pred=t["t_pred"],
        patch=PatchConfig(patch_len=t["patch_len"], stride=t["stride"], embed_dim=t["embed_dim"]),
        n_heads=t["n_heads"],
        n_prototypes=t["n_prototypes"],
        pap_enabled=pap_enabled,
        seed=seed,
        backbone=BackboneConfig(
            vocab_size=t["vocab_size"], hidden=t["hidden"], n_layers=t["n_layers"],
            n_heads=t["backbone_heads"], max_seq=t["max_seq"], seed=seed,
        ),
    )
    return BeamLLM(cfg)


def build_tiny_recurrent(kind, seed=0):
    from .baselines import RecurrentConfig, RecurrentModel

    cfg = RecurrentConfig(
        kind=kind, n_beams=4, t_hist=4, t_pred=2, input_dim=4, hidden=4, n_layers=2, seed=seed
    )
    return RecurrentModel(cfg)


def _model_loss_fn(model, n_samples=3, seed=0):
    from .tensor import sequence_cross_entropy

    rng = np.random.default_rng(seed)
    hists = rng.uniform(0.05, 0.95, size=(n_samples, 4, model.cfg.t_hist))
    targets = rng.integers(0, model.cfg.n_beams, size=(n_samples, model.cfg.t_pred))
    return lambda: sequence_cross_entropy(model.forward_batch(hists), targets)


def check_model(model, h=1e-5, n_samples=3, seed=0, jitter=0.05):
    """Max relative FD error over every trainable parameter of `model`.

    Parameters are first nudged to a generic random point: at the pristine
    init some biases are exactly zero, which parks relu pre-activations on
    the kink where central differences are meaningless.
    """
    if jitter:
        rng = np.random.default_rng(seed + 4242)
        for p in model.trainables.trainable():
            p.tensor.data += rng.normal(0.0, jitter, size=p.tensor.data.shape)
    errs = check_parameters(_model_loss_fn(model, n_samples, seed), model.trainables.trainable(), h=h)
    return max(errs.values()), errs


def run_model_suite(h=1e-5, seed=0):
    """Gradient checks for the predictor and each baseline; {model: max err}."""
    results = {}
    results["beamllm"], _ = check_model(build_tiny_beamllm(seed=seed), h=h)
    for kind in ("rnn", "gru", "lstm"):
        results[kind], _ = check_model(build_tiny_recurrent(kind, seed=seed), h=h)
    return results


def run_op_suite(h=1e-5, seed=0):
    """Per-operator FD checks on random small tensors; {op: max rel err}."""
    from . import tensor as T

    rng = np.random.default_rng(seed)

    def rand(*shape, low=-1.0, high=1.0):
        return T.Tensor(rng.uniform(low, high, size=shape), requires_grad=True)

    def away_from_zero(*shape):
        # keeps relu inputs off the kink so FD stays valid
        sign = rng.choice([-1.0, 1.0], size=shape)
        return T.Tensor(sign * rng.uniform(0.1, 1.0, size=shape), requires_grad=True)

    results = {}

    def check(name, make_out, *inputs):
        # fix the projection weights once so FD evaluates one function
        w = T.Tensor(rng.uniform(-1.0, 1.0, size=make_out().data.shape))
        make_loss = lambda: T.sum_(T.mul(make_out(), w))
        err = 0.0
        for x in inputs:
            err = max(err, check_tensor_input(make_loss, x, h=h))
        results[name] = err

    a, b = rand(3, 4), rand(3, 4)
    check("add", lambda: (T.add(a, b)), a, b)
    check("sub", lambda: (T.sub(a, b)), a, b)
    check("mul", lambda: (T.mul(a, b)), a, b)
    d = T.Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    check("div", lambda: (T.div(a, d)), a, d)
    bias = rand(4)
    check("add_broadcast", lambda: (T.add(a, bias)), a, bias)

    m1, m2 = rand(3, 4), rand(4, 5)
    check("matmul", lambda: (T.matmul(m1, m2)), m1, m2)
    bm1, bm2 = rand(2, 3, 4), rand(4, 5)
    check("matmul_batched", lambda: (T.matmul(bm1, bm2)), bm1, bm2)
    bm3, bm4 = rand(2, 2, 3, 4), rand(2, 2, 4, 3)
    check("matmul_batched_pair", lambda: (T.matmul(bm3, bm4)), bm3, bm4)

    t = rand(2, 3, 4)
    check("transpose", lambda: (T.transpose(t, (1, 2, 0))), t)
    check("reshape", lambda: (T.reshape(t, (6, 4))), t)
    check("take", lambda: (t[:, 1:, 2]), t)
    idx = np.array([[0, 1], [1, 2], [3, 3]])
    check("gather_last", lambda: (T.gather_last(t, idx)), t)
    c1, c2 = rand(2, 3), rand(2, 2)
    check("concat", lambda: (T.concat([c1, c2], axis=1)), c1, c2)
    check("sum", lambda: T.sum_(t, axis=1), t)
    check("mean", lambda: T.mean_(t, axis=(0, 2)), t)

    r = away_from_zero(3, 5)
    check("relu", lambda: (T.relu(r)), r)
    check("gelu", lambda: (T.gelu(a)), a)
    check("tanh", lambda: (T.tanh_(a)), a)
    check("sigmoid", lambda: (T.sigmoid(a)), a)
    check("exp", lambda: (T.exp_(a)), a)
    pos = T.Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    check("log", lambda: (T.log_(pos)), pos)
    check("sqrt", lambda: (T.sqrt_(pos)), pos)

    s = rand(3, 6)
    check("softmax", lambda: (T.softmax(s, axis=-1)), s)
    ln_x, ln_g, ln_b = rand(3, 6), rand(6), rand(6)
    check("layer_norm", lambda: (T.layer_norm(ln_x, ln_g, ln_b)), ln_x, ln_g, ln_b)
    sd = rand(3, 6)
    check("standardize", lambda: (T.standardize(sd)[0]), sd)

    ce_logits = rand(7)
    check("cross_entropy", lambda: T.cross_entropy(ce_logits, 3), ce_logits)
    seq_logits = rand(2, 3, 5)
    targets = rng.integers(0, 5, size=(2, 3))
    check(
        "sequence_cross_entropy",
        lambda: T.sequence_cross_entropy(seq_logits, targets),
        seq_logits,
    )
    return results
