"""Command line interface: generate, train, predict, eval, sweep, trace.

Every command reads one JSON config (defaults apply when omitted) and
accepts flat ``--dotted.key value`` overrides, e.g.::

    nem train --config exp.json --mode nem --train.delta 50 --seed 9

Exit codes: 0 ok, 2 config/spec error, 3 numeric failure, 4 compatibility
error (checkpoint/dataset mismatch).
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import datagen, evaluation, training
from .channel import DegenerateChannelError
from .config import ConfigError
from .data import DataError
from .datagen import CorpusSpecError, DatasetFormatError
from .encoder import CheckpointError, EncoderError, load_params, save_params
from .labels import CatalogError
from .training import NonFiniteLossError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_COMPAT = 4


def _parse_overrides(extra: list[str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(extra):
        key = extra[i]
        if not key.startswith("--") or i + 1 >= len(extra):
            raise ConfigError(f"overrides must be '--key value' pairs, got {extra[i:]!r}")
        pairs.append((key[2:], extra[i + 1]))
        i += 2
    return pairs


def _load(args, extra) -> dict:
    cfg = cfgmod.load_config(args.config)
    cfg = cfgmod.apply_overrides(cfg, _parse_overrides(extra))
    return cfg


def _ensure_parent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def _write_trace(path, trace):
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args, extra) -> int:
    cfg = _load(args, extra)
    paths = cfg["paths"]
    seed = int(cfg["seed"])
    train_spec = cfgmod.corpus_spec_from_config(
        cfg, cfg["corpus"]["train_bags"], cfgmod.derived_seed(seed, "train-corpus")
    )
    test_spec = cfgmod.corpus_spec_from_config(
        cfg, cfg["corpus"]["test_bags"], cfgmod.derived_seed(seed, "test-corpus")
    )
    train_set = datagen.generate(train_spec)
    test_set = datagen.generate(test_spec)
    _ensure_parent(paths["train_dataset"])
    _ensure_parent(paths["test_dataset"])
    datagen.save_dataset(train_set, paths["train_dataset"])
    datagen.save_dataset(test_set, paths["test_dataset"])
    stats = {
        "train": datagen.corpus_stats(train_set),
        "test": datagen.corpus_stats(test_set),
    }
    _ensure_parent(paths["stats"])
    with open(paths["stats"], "w", encoding="utf-8") as fh:
        json.dump(stats, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(
        f"wrote {paths['train_dataset']} ({len(train_set)} bags), "
        f"{paths['test_dataset']} ({len(test_set)} bags), stats -> {paths['stats']}"
    )
    return EXIT_OK


def cmd_train(args, extra) -> int:
    cfg = _load(args, extra)
    if args.selector:
        cfg["train"]["selector"] = args.selector
    paths = cfg["paths"]
    dataset = datagen.load_dataset(paths["train_dataset"])
    tconf = cfgmod.train_config_from_config(cfg, dataset.catalog)
    result = training.train(dataset, tconf, mode=args.mode)
    _ensure_parent(paths["checkpoint"])
    save_params(result.params, paths["checkpoint"], selector=tconf.selector)
    _write_trace(paths["trace"], result.trace)
    final = result.trace[-1]
    lb = final["lower_bound"]
    loss = final["train_loss"]
    print(
        f"mode={args.mode} selector={tconf.selector} iters={final['iter']} "
        f"final lower_bound={lb if lb is None else f'{lb:.6f}'} "
        f"train_loss={loss if loss is None else f'{loss:.6f}'}"
    )
    print(f"checkpoint -> {paths['checkpoint']}; trace -> {paths['trace']}")
    return EXIT_OK


def _load_compatible(checkpoint_path, dataset_path):
    dataset = datagen.load_dataset(dataset_path)
    params, selector = load_params(
        checkpoint_path, expected_catalog_hash=dataset.catalog.digest()
    )
    return params, selector, dataset


def cmd_predict(args, extra) -> int:
    cfg = _load(args, extra)
    paths = cfg["paths"]
    ckpt = args.checkpoint or paths["checkpoint"]
    data_path = args.dataset or paths["test_dataset"]
    params, selector, dataset = _load_compatible(ckpt, data_path)
    selector = args.selector or selector or cfg["train"]["selector"]
    out_path = args.out or paths["predictions"]
    _ensure_parent(out_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        for bag in dataset.bags:
            scores = training.predict(params, bag, selector)
            fh.write(json.dumps({"id": bag.id, "scores": [float(s) for s in scores]}) + "\n")
    print(f"wrote {out_path} ({len(dataset)} bags, selector={selector})")
    return EXIT_OK


def cmd_eval(args, extra) -> int:
    cfg = _load(args, extra)
    paths = cfg["paths"]
    ckpt = args.checkpoint or paths["checkpoint"]
    data_path = args.dataset or paths["test_dataset"]
    params, selector, dataset = _load_compatible(ckpt, data_path)
    selector = args.selector or selector or cfg["train"]["selector"]
    probs = training.predict_all(params, dataset, selector)
    report = evaluation.write_reports(
        paths["report_dir"], probs, dataset, threshold=float(cfg["eval"]["threshold"])
    )
    print(
        f"P={report['precision']:.1f} R={report['recall']:.1f} F1={report['f1']:.1f} "
        f"(threshold={report['threshold']}) -> {paths['report_dir']}"
    )
    return EXIT_OK


def cmd_sweep(args, extra) -> int:
    cfg = _load(args, extra)
    paths = cfg["paths"]
    threshold = float(cfg["eval"]["threshold"])
    pf_list = (
        [float(x) for x in args.pf_list.split(",")]
        if args.pf_list
        else [float(x) for x in cfg["sweep"]["pf_list"]]
    )
    n_seeds = args.seeds or int(cfg["sweep"]["n_seeds"])
    base_seed = int(cfg["seed"])
    sweep_dir = Path(paths["report_dir"]) / "sweep"
    sweep_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for seed_offset in range(n_seeds):
        run_seed = base_seed + seed_offset
        run_cfg = json.loads(json.dumps(cfg))
        run_cfg["seed"] = run_seed
        run_cfg["corpus"]["corruption"] = None
        train_spec = cfgmod.corpus_spec_from_config(
            run_cfg, run_cfg["corpus"]["train_bags"], cfgmod.derived_seed(run_seed, "train-corpus")
        )
        test_spec = cfgmod.corpus_spec_from_config(
            run_cfg, run_cfg["corpus"]["test_bags"], cfgmod.derived_seed(run_seed, "test-corpus")
        )
        clean_train = datagen.generate(train_spec)
        test_set = datagen.generate(test_spec)
        catalog = clean_train.catalog
        tconf = cfgmod.train_config_from_config(run_cfg, catalog)
        for pf in pf_list:
            noisy_train = datagen.apply_flip_noise(
                clean_train, pf, cfgmod.derived_seed(run_seed, f"flip-{pf:g}")
            )
            for mode in ("baseline", "nem"):
                result = training.train(noisy_train, tconf, mode=mode)
                tag = f"pf{pf:g}_{mode}_seed{run_seed}"
                _write_trace(sweep_dir / f"trace_{tag}.jsonl", result.trace)
                test_probs = training.predict_all(result.params, test_set, tconf.selector)
                preds, total = evaluation.build_ranked_predictions(test_probs, test_set)
                precision, recall, f1 = evaluation.prf1(preds, threshold, total)
                train_probs = training.predict_all(result.params, noisy_train, tconf.selector)
                noisy_mean, orig_mean = evaluation.label_probability_curves(
                    train_probs, noisy_train
                )
                final_q = result.trace[-1]["mean_q_noisy"]
                rows.append(
                    {
                        "pf": pf,
                        "mode": mode,
                        "seed": run_seed,
                        "precision": precision,
                        "recall": recall,
                        "f1": f1,
                        "mean_prob_noisy": noisy_mean,
                        "mean_prob_original": orig_mean,
                        "final_mean_q_noisy": final_q,
                    }
                )
                print(
                    f"pf={pf:g} mode={mode} seed={run_seed}: "
                    f"P={precision:.1f} R={recall:.1f} F1={f1:.1f}"
                )

    runs_path = sweep_dir / "sweep_runs.csv"
    with open(runs_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for row in rows:
            w.writerow(row)

    agg_path = sweep_dir / "sweep.csv"
    with open(agg_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pf", "mode", "P", "R", "F1"])
        for pf in pf_list:
            for mode in ("baseline", "nem"):
                sel = [r for r in rows if r["pf"] == pf and r["mode"] == mode]
                w.writerow(
                    [
                        pf,
                        mode,
                        repr(float(np.mean([r["precision"] for r in sel]))),
                        repr(float(np.mean([r["recall"] for r in sel]))),
                        repr(float(np.mean([r["f1"] for r in sel]))),
                    ]
                )
    print(f"sweep results -> {agg_path} and {runs_path}")
    return EXIT_OK


def cmd_trace(args, extra) -> int:
    series = []
    with open(args.trace_file, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                series.append(json.loads(line))
    cols = ["iter", "lower_bound", "mean_q_noisy", "mean_q_clean", "train_loss", "wall_ms"]
    print("\t".join(cols))
    for rec in series:
        print("\t".join(_fmt(rec.get(c)) for c in cols))
    if args.csv:
        _ensure_parent(args.csv)
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for rec in series:
                w.writerow([rec.get(c) for c in cols])
        print(f"csv -> {args.csv}")
    return EXIT_OK


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nem",
        description="noise-aware EM training for bag-level relation classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config (defaults when omitted)")

    p = sub.add_parser("generate", help="generate synthetic train/test corpora")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model and write checkpoint + trace")
    common(p)
    p.add_argument("--mode", choices=training.MODES, default="nem")
    p.add_argument("--selector", choices=("mean", "max", "attention"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a dataset with a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--selector", choices=("mean", "max", "attention"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="compute metrics reports for a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--dataset")
    p.add_argument("--selector", choices=("mean", "max", "attention"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="noise sweep: train both modes per flip level")
    common(p)
    p.add_argument("--pf-list", help="comma-separated flip probabilities")
    p.add_argument("--seeds", type=int, help="number of seeds (base seed + offsets)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trace", help="inspect a training trace file")
    p.add_argument("trace_file")
    p.add_argument("--csv", help="also export the table as CSV")
    p.set_defaults(func=cmd_trace)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return args.func(args, extra)
    except (ConfigError, CorpusSpecError, DatasetFormatError, CatalogError,
            DataError, EncoderError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteLossError, DegenerateChannelError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CheckpointError as exc:
        print(f"compatibility error: {exc}", file=sys.stderr)
        return EXIT_COMPAT


if __name__ == "__main__":
    sys.exit(main())
