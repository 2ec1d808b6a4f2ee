"""Command-line pipeline driver.

Subcommands cover the full experiment grid: gen-data (surrogate Monte-Carlo
datasets), train / sample (diffusion model), eval (oracle-replay scoring),
bench (GBR augmentation study), sweep (layer-count and learning-rate
studies) and eval-all (per-circuit error table across all twelve cells).

Every command is deterministic given its flags and config; each writes a
sibling manifest JSON with the tool version, the effective configuration and
sha256 hashes of the artifacts it produced. Exit codes: 0 success, 2 usage or
config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .data import Circuit, load_csv, save_csv, schema_for, train_test_split
from .diffusion import (
    DenoiserConfig,
    load_checkpoint,
    sample as draw_samples,
    save_checkpoint,
    train as train_model,
)
from .evaluate import HISTOGRAM_BINS, evaluate, evaluate_dataset, export_histograms
from .exceptions import ConfigError, GatesynthError
from .gbr import run_benchmark
from .simulator import generate_dataset, topology_for


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(main_artifact: Path, command: str, params: dict,
                    outputs: list[Path]) -> Path:
    manifest = {
        "tool": "gatesynth",
        "version": __version__,
        "command": command,
        "params": params,
        "outputs": {p.name: f"sha256:{_sha256(p)}" for p in outputs},
    }
    path = main_artifact.with_name(main_artifact.stem + ".manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    return path


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg


def _apply_common_overrides(cfg: RunConfig, args) -> None:
    for attr, key in (
        ("circuit", "circuit"),
        ("n_real", "n_real"),
        ("n_synthetic", "n_synthetic"),
        ("sampler", "sampler"),
        ("data_seed", "data_seed"),
        ("train_seed", "train_seed"),
        ("sample_seed", "sample_seed"),
    ):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, attr, value)
    for attr, key in (
        ("hidden_layers", "layers"),
        ("learning_rate", "lr"),
        ("max_epochs", "epochs"),
        ("patience", "patience"),
        ("batch_size", "batch_size"),
    ):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg.denoiser, attr, value)
    if getattr(args, "widths", None):
        cfg.denoiser.widths = tuple(int(w) for w in args.widths.split(","))
    for attr, key in (("steps", "steps"), ("beta_start", "beta_start"),
                      ("beta_end", "beta_end")):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg.schedule, attr, value)


# -- commands -------------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    cfg = _load_run_config(args)
    _apply_common_overrides(cfg, args)
    if args.n is not None:
        cfg.n_real = args.n
    if args.seed is not None:
        cfg.data_seed = args.seed
    cfg.validate()
    out = Path(args.out)
    dataset = generate_dataset(cfg.resolved_circuit(), cfg.n_real, cfg.data_seed,
                               cfg.process_nominals())
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(dataset, out)
    _write_manifest(out, "gen-data",
                    {"circuit": cfg.circuit, "n": cfg.n_real, "seed": cfg.data_seed},
                    [out])
    print(f"wrote {dataset.n_rows}x{dataset.n_features} dataset to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_run_config(args)
    _apply_common_overrides(cfg, args)
    if args.seed is not None:
        cfg.train_seed = args.seed
    cfg.validate()
    dataset = load_csv(args.data)
    cfg.circuit = dataset.schema.circuit.value
    model = train_model(dataset, cfg.denoiser, cfg.make_schedule())
    out = Path(args.out_model)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    _write_manifest(out, "train", cfg.to_dict(), [out])
    layers, _ = cfg.denoiser.resolve_architecture(dataset.n_features)
    print(f"trained {layers}-hidden-layer denoiser on {dataset.n_rows} rows "
          f"({model.history.epochs_run} epochs, best epoch {model.history.best_epoch}); "
          f"checkpoint at {out}")
    return 0


def _cmd_sample(args) -> int:
    cfg = _load_run_config(args)
    _apply_common_overrides(cfg, args)
    if args.n is not None:
        cfg.n_synthetic = args.n
    if args.seed is not None:
        cfg.sample_seed = args.seed
    cfg.validate()
    model = load_checkpoint(args.model)
    dataset = draw_samples(model, cfg.n_synthetic, cfg.sample_seed, sampler=cfg.sampler)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(dataset, out)
    _write_manifest(out, "sample",
                    {"n": cfg.n_synthetic, "seed": cfg.sample_seed, "sampler": cfg.sampler},
                    [out])
    print(f"wrote {dataset.n_rows} synthetic rows to {out} (sampler={cfg.sampler})")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    _apply_common_overrides(cfg, args)
    if args.n is not None:
        cfg.n_synthetic = args.n
    if args.seed is not None:
        cfg.sample_seed = args.seed
    cfg.validate()
    model = load_checkpoint(args.model)
    topology = topology_for(model.circuit)
    nominals = cfg.process_nominals()
    report = evaluate(model, topology, cfg.n_synthetic, cfg.sample_seed,
                      sampler=cfg.sampler, nominals=nominals)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(out)
    outputs = [out]
    if args.hist:
        generated = draw_samples(model, cfg.n_synthetic, cfg.sample_seed, sampler=cfg.sampler)
        reference = generate_dataset(model.circuit, cfg.n_synthetic,
                                     report.config["reference_seed"], nominals)
        hist_path = Path(args.hist)
        export_histograms(reference, generated, args.bins, hist_path)
        outputs.append(hist_path)
    _write_manifest(out, "eval",
                    {"n": cfg.n_synthetic, "seed": cfg.sample_seed, "sampler": cfg.sampler},
                    outputs)
    worst = max(report.mape_pct.values())
    print(f"eval report at {out}: worst output MAPE {worst:.2f}%, "
          f"{report.nonphysical_rows} nonphysical rows")
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_run_config(args)
    _apply_common_overrides(cfg, args)
    if args.test_fraction is not None:
        cfg.bench.test_fraction = args.test_fraction
    if args.split_seed is not None:
        cfg.bench.split_seed = args.split_seed
    for attr, key in (("n_trees", "trees"), ("max_depth", "depth"),
                      ("shrinkage", "shrinkage"), ("min_samples_leaf", "min_leaf")):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg.gbr, attr, value)
    cfg.validate()
    real = load_csv(args.real)
    synthetic = load_csv(args.synthetic)
    real_train, real_test = train_test_split(real, cfg.bench.test_fraction,
                                             cfg.bench.split_seed)
    report = run_benchmark(real_train, synthetic, real_test, config=cfg.gbr)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(out)
    outputs = [out]
    if args.csv:
        csv_path = Path(args.csv)
        report.to_csv(csv_path)
        outputs.append(csv_path)
    _write_manifest(out, "bench",
                    {"test_fraction": cfg.bench.test_fraction,
                     "split_seed": cfg.bench.split_seed},
                    outputs)
    for name, cmp in report.targets.items():
        print(f"{name}: R2 {cmp.real['r2']:.4f} -> {cmp.augmented['r2']:.4f}, "
              f"MAE {cmp.real['mae']:.3e} -> {cmp.augmented['mae']:.3e}")
    print(f"bench report at {out}")
    return 0


def _run_pipeline(cfg: RunConfig, layers: int | None = None,
                  lr: float | None = None):
    """One train/sample/eval pass; returns the EvalReport."""
    denoiser = DenoiserConfig(**{**cfg.denoiser.__dict__})
    if layers is not None:
        denoiser.hidden_layers = layers
        denoiser.widths = None
    if lr is not None:
        denoiser.learning_rate = lr
    circuit = cfg.resolved_circuit()
    nominals = cfg.process_nominals()
    real = generate_dataset(circuit, cfg.n_real, cfg.data_seed, nominals)
    model = train_model(real, denoiser, cfg.make_schedule())
    return evaluate(model, topology_for(circuit), cfg.n_synthetic, cfg.sample_seed,
                    sampler=cfg.sampler, nominals=nominals)


def _cmd_sweep(args) -> int:
    cfg = _load_run_config(args)
    _apply_common_overrides(cfg, args)
    cfg.validate()
    key, _, values = args.grid.partition("=")
    if not values:
        raise ConfigError("--grid expects key=v1,v2,... (keys: layers, lr)")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    schema = schema_for(cfg.resolved_circuit())
    rows = []
    if key == "layers":
        grid = [int(v) for v in values.split(",")]
        for layers in grid:
            report = _run_pipeline(cfg, layers=layers)
            avg = float(np.mean(list(report.mape_pct.values())))
            rows.append((layers, avg, report))
        header = ["layers", "avg_mape_pct"] + [f"mape_{n}" for n in schema.output_names]
    elif key == "lr":
        grid = [float(v) for v in values.split(",")]
        for lr in grid:
            report = _run_pipeline(cfg, lr=lr)
            avg = float(np.mean(list(report.mape_pct.values())))
            rows.append((lr, avg, report))
        header = ["learning_rate", "avg_mape_pct"] + [f"mape_{n}" for n in schema.output_names]
    else:
        raise ConfigError(f"unknown sweep grid {key!r} (expected layers or lr)")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for value, avg, report in rows:
            cells = [repr(value), repr(avg)]
            cells += [repr(report.mape_pct[n]) for n in schema.output_names]
            fh.write(",".join(cells) + "\n")
    _write_manifest(out, "sweep", {"grid": args.grid, "circuit": cfg.circuit}, [out])
    best = min(rows, key=lambda r: r[1])
    print(f"sweep table at {out}; best {key}={best[0]} (avg MAPE {best[1]:.2f}%)")
    return 0


def _cmd_eval_all(args) -> int:
    cfg = _load_run_config(args)
    _apply_common_overrides(cfg, args)
    cfg.validate()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # Columns A-F: delay_lh/delay_hl for nodes a, b, c; blank when the
    # circuit has fewer observed nodes.
    all_outputs = [f"delay_{kind}_{node}" for node in "abc" for kind in ("lh", "hl")]
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write("circuit," + ",".join(f"mape_{n}" for n in all_outputs) + "\n")
        for circuit in Circuit:
            per = RunConfig()
            per.__dict__.update(cfg.__dict__)
            per.circuit = circuit.value
            report = _run_pipeline(per)
            cells = [circuit.value]
            for name in all_outputs:
                cells.append(repr(report.mape_pct[name]) if name in report.mape_pct else "")
            fh.write(",".join(cells) + "\n")
            print(f"{circuit.value}: "
                  + ", ".join(f"{k}={v:.2f}%" for k, v in report.mape_pct.items()))
    _write_manifest(out, "eval-all", {"sampler": cfg.sampler}, [out])
    print(f"per-circuit MAPE table at {out}")
    return 0


# -- argument parsing -------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _add_config_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run-config file; flags override it")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layers", type=int, help="hidden layer count (4, 5 or 6)")
    p.add_argument("--widths", help="comma-separated hidden widths")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--epochs", type=int, help="max training epochs")
    p.add_argument("--patience", type=int, help="early-stop patience (epochs)")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--steps", type=int, help="diffusion steps T")
    p.add_argument("--beta-start", dest="beta_start", type=float)
    p.add_argument("--beta-end", dest="beta_end", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatesynth",
        description="Synthetic gate-delay data via a tabular diffusion model.",
    )
    parser.add_argument("--version", action="version", version=f"gatesynth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a surrogate Monte-Carlo dataset")
    p.add_argument("--circuit", help="circuit name, e.g. not, nand2, fulladder")
    p.add_argument("--n", type=_positive_int, help="number of rows")
    p.add_argument("--seed", type=int, help="data seed")
    p.add_argument("--out", required=True, help="output CSV path")
    _add_config_flag(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train the diffusion denoiser on a CSV dataset")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--out-model", dest="out_model", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, help="train seed")
    _add_config_flag(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sample", help="generate synthetic rows from a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--seed", type=int, help="sample seed")
    p.add_argument("--sampler", choices=("paper", "ancestral"))
    p.add_argument("--out", required=True, help="output CSV path")
    _add_config_flag(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("eval", help="score generated data by oracle replay")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--seed", type=int, help="sample seed")
    p.add_argument("--sampler", choices=("paper", "ancestral"))
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--hist", help="also write per-feature histogram CSV here")
    p.add_argument("--bins", type=_positive_int, default=HISTOGRAM_BINS)
    _add_config_flag(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="GBR augmentation benchmark (real vs real+synthetic)")
    p.add_argument("--real", required=True, help="real dataset CSV")
    p.add_argument("--synthetic", required=True, help="synthetic dataset CSV")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="also write the metric table CSV here")
    p.add_argument("--test-fraction", dest="test_fraction", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--trees", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--shrinkage", type=float)
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    _add_config_flag(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("sweep", help="layer-count or learning-rate study")
    p.add_argument("--grid", required=True, help="layers=4,5,6 or lr=1e-4,5e-4,...")
    p.add_argument("--circuit")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--n-real", dest="n_real", type=_positive_int)
    p.add_argument("--n-synthetic", dest="n_synthetic", type=_positive_int)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--train-seed", dest="train_seed", type=int)
    p.add_argument("--sample-seed", dest="sample_seed", type=int)
    p.add_argument("--sampler", choices=("paper", "ancestral"))
    _add_config_flag(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("eval-all", help="train and score every circuit; MAPE table")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--n-real", dest="n_real", type=_positive_int)
    p.add_argument("--n-synthetic", dest="n_synthetic", type=_positive_int)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--train-seed", dest="train_seed", type=int)
    p.add_argument("--sample-seed", dest="sample_seed", type=int)
    p.add_argument("--sampler", choices=("paper", "ancestral"))
    _add_config_flag(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_eval_all)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GatesynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
