"""Command-line entry point wiring scenario generation, training, and eval.

Commands are idempotent given identical inputs and seed; each writes a run
manifest (resolved config hash, seed, library versions) next to its primary
output. Exit codes: 0 success, 2 on any validated error (one line on
stderr).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .backbone import BackboneConfig
from .baselines import RecurrentConfig, RecurrentModel
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .config import config_hash, load_config, scenario_config, train_config
from .errors import BeamcastError, ConfigError
from .evaluate import (
    complexity_report,
    evaluate,
    write_complexity_csv,
    write_metrics_csv,
)
from .gradcheck import run_model_suite, run_op_suite
from .reprogram import BeamLLM, BeamLLMConfig
from .scenario import generate_scenario, load_jsonl, save_jsonl, split_dataset
from .training import MODE_SHAPES, train, write_history_csv

SEED_ENV = "BEAMCAST_SEED"


def _default_seed():
    return int(os.environ.get(SEED_ENV, "7"))


def build_model(kind, mode, pap_enabled, seed, n_beams=32):
    if kind == "beamllm":
        return BeamLLM(
            BeamLLMConfig.for_mode(
                mode, n_beams=n_beams, pap_enabled=pap_enabled, seed=seed,
                backbone=BackboneConfig(seed=seed),
            )
        )
    t_hist, t_pred = MODE_SHAPES[mode]
    return RecurrentModel(
        RecurrentConfig(kind=kind, n_beams=n_beams, t_hist=t_hist, t_pred=t_pred, seed=seed)
    )


def load_model(ckpt_path):
    """Rebuild the exact architecture recorded in a checkpoint manifest."""
    meta, tensors = load_checkpoint(ckpt_path)
    kind = meta.get("model")
    if kind == "beamllm":
        model = BeamLLM.from_meta(meta)
    else:
        model = RecurrentModel.from_meta(meta)
    restore_into(model.params, tensors)
    return model, meta


def write_manifest(primary_output, command, cfg, seed, outputs):
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": seed,
        "versions": {
            "beamcast": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "outputs": sorted(outputs),
    }
    path = primary_output + ".manifest.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _windows(records, cfg, mode):
    t_hist, t_pred = MODE_SHAPES[mode]
    return split_dataset(records, seed=cfg["seed"], t_hist=t_hist, t_pred=t_pred)


def cmd_gen(args):
    cfg = load_config(args.config, {"seed": args.seed})
    rng = np.random.default_rng(cfg["seed"])
    records = generate_scenario(scenario_config(cfg), rng)
    save_jsonl(records, args.out)
    write_manifest(args.out, "gen", cfg, cfg["seed"], [args.out])
    n = sum(len(r.frames) for r in records)
    print(f"gen: wrote {len(records)} sequences ({n} frames) to {args.out}")
    return 0


def cmd_train(args):
    overrides = {"seed": args.seed, "model": args.model, "mode": args.mode}
    if args.no_pap:
        overrides["pap_enabled"] = False
    if args.epochs is not None:
        overrides["train.epochs"] = args.epochs
    cfg = load_config(args.config, overrides)
    records = load_jsonl(args.data)
    split = _windows(records, cfg, cfg["mode"])
    model = build_model(
        cfg["model"], cfg["mode"], cfg["pap_enabled"], cfg["seed"],
        n_beams=cfg["scenario"]["n_beams"],
    )
    result = train(model, split, train_config(cfg), log_every=args.log_every)
    meta = {**model.manifest_meta(), "split_seed": cfg["seed"]}
    save_checkpoint(args.out, model.params, meta=meta)
    history_path = args.out + ".history.csv"
    write_history_csv(history_path, result.history)
    write_manifest(args.out, "train", cfg, cfg["seed"], [args.out, history_path])
    print(
        f"train: {cfg['model']}/{cfg['mode']} best epoch {result.best_epoch} "
        f"val_top1 {result.best_val_top1:.4f} -> {args.out}"
    )
    return 0


def cmd_eval(args):
    cfg = load_config(args.config, {"seed": args.seed, "mode": args.mode})
    model, meta = load_model(args.ckpt)
    if meta.get("mode") != cfg["mode"]:
        raise ConfigError(
            f"checkpoint was trained in {meta.get('mode')!r} mode, requested {cfg['mode']!r}"
        )
    records = load_jsonl(args.data)
    split_seed = meta.get("split_seed", cfg["seed"])
    t_hist, t_pred = MODE_SHAPES[cfg["mode"]]
    split = split_dataset(records, seed=split_seed, t_hist=t_hist, t_pred=t_pred)
    reports = [
        evaluate(model, split, subset="test"),
        evaluate(model, split, subset="val"),
    ]
    reports[1].model_id += "@val"
    write_metrics_csv(args.out, reports)
    write_manifest(args.out, "eval", cfg, cfg["seed"], [args.out])
    rep = reports[0]
    print(
        f"eval: {rep.model_id} {rep.mode} n_test={rep.n_test} "
        f"top1 {rep.horizon_avg(1):.4f} top3 {rep.horizon_avg(3):.4f} "
        f"degradation(top1) {rep.degradation(1):+.4f}"
    )
    return 0


def cmd_ablate(args):
    cfg = load_config(args.config, {"seed": args.seed, "mode": args.mode, "model": "beamllm"})
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    records = load_jsonl(args.data)
    split = _windows(records, cfg, cfg["mode"])
    os.makedirs(args.out_dir, exist_ok=True)
    reports = []
    models = {}
    for pap in (True, False):
        model = build_model("beamllm", cfg["mode"], pap, cfg["seed"], cfg["scenario"]["n_beams"])
        tcfg = train_config(cfg)
        tcfg.pap_enabled = pap
        train(model, split, tcfg)
        tag = "pap" if pap else "nopap"
        ckpt = os.path.join(args.out_dir, f"beamllm_{tag}.ckpt")
        save_checkpoint(ckpt, model.params, meta={**model.manifest_meta(), "split_seed": cfg["seed"]})
        rep = evaluate(model, split)
        rep.model_id = f"beamllm-{tag}"
        reports.append(rep)
        models[pap] = model
    # conditioning probe: identical inputs, live prefix => different outputs
    rng = np.random.default_rng(cfg["seed"])
    probe = rng.uniform(0.0, 1.0, size=(4, models[True].cfg.t_hist))
    delta = float(
        np.max(np.abs(models[True].forward(probe).scores - models[False].forward(probe).scores))
    )
    gap_path = os.path.join(args.out_dir, "ablation.csv")
    with open(gap_path, "w", encoding="utf-8") as f:
        f.write("K,step,acc_pap,acc_nopap,gap\n")
        for ki, k in enumerate(reports[0].ks):
            for j in range(reports[0].accuracy.shape[1]):
                on = reports[0].accuracy[ki, j]
                off = reports[1].accuracy[ki, j]
                f.write(f"{k},{j + 1},{on!r},{off!r},{on - off!r}\n")
    metrics_path = os.path.join(args.out_dir, "ablation_metrics.csv")
    write_metrics_csv(metrics_path, reports)
    write_manifest(gap_path, "ablate", cfg, cfg["seed"], [gap_path, metrics_path])
    print(
        f"ablate: top1 gap {reports[0].horizon_avg(1) - reports[1].horizon_avg(1):+.4f} "
        f"top3 gap {reports[0].horizon_avg(3) - reports[1].horizon_avg(3):+.4f} "
        f"probe max|dlogit| {delta:.3e}"
    )
    return 0


def cmd_gradcheck(args):
    ops = run_op_suite()
    op_worst = max(ops.values())
    print(f"numcore-ops: max rel err {op_worst:.3e} over {len(ops)} operators")
    models = run_model_suite()
    worst = op_worst
    for name, err in models.items():
        print(f"{name}: max rel err {err:.3e}")
        worst = max(worst, err)
    ok = op_worst <= 1e-6 and all(err <= 1e-4 for err in models.values())
    print(f"gradcheck: {'PASS' if ok else 'FAIL'} (worst {worst:.3e})")
    return 0 if ok else 1


def cmd_bench(args):
    cfg = load_config(args.config, {"seed": args.seed})
    models = [build_model(k, cfg["mode"], cfg["pap_enabled"], cfg["seed"]) for k in
              ("beamllm", "rnn", "gru", "lstm")]
    rows = complexity_report(models, n_runs=args.runs)
    write_complexity_csv(args.out, rows)
    write_manifest(args.out, "bench", cfg, cfg["seed"], [args.out])
    for r in rows:
        print(
            f"bench: {r['model']:8s} total {r['total_params']:>10,d} "
            f"trainable {r['trainable_params']:>10,d} "
            f"inference {r['mean_inference_sec'] * 1e3:.3f} ms/sample"
        )
    return 0


def make_parser():
    parser = argparse.ArgumentParser(
        prog="beamcast",
        description="Synthetic V2I beam prediction: scenario generation, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="YAML run config; flags override")
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help=f"run seed (env {SEED_ENV})")

    p = sub.add_parser("gen", help="generate a synthetic scenario dataset")
    common(p)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a predictor on a dataset")
    common(p)
    p.add_argument("--model", choices=["beamllm", "rnn", "gru", "lstm"], default="beamllm")
    p.add_argument("--mode", choices=["standard", "fewshot"], default="standard")
    p.add_argument("--no-pap", action="store_true", help="disable the prompt prefix")
    p.add_argument("--data", required=True, help="input JSONL dataset")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    p.add_argument("--log-every", type=int, default=0, help="print progress every N epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["standard", "fewshot"], default="standard")
    p.add_argument("--out", required=True, help="output metrics CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="paired prompt-on/prompt-off training and comparison")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["standard", "fewshot"], default="standard")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="parameter counts and inference timing")
    common(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--runs", type=int, default=1000, help="timed forwards per model")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BeamcastError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: FileNotFoundError: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
