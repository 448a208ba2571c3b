"""Command-line interface.

Subcommands: gen, split, train, attack, eval, spectrum, diffuse, repro.
Exit codes: 0 success, 1 usage, 2 data/config error, 3 numeric error.
Every CSV output carries a `# config_hash=... seed=...` header line; the
delimited outputs are canonical and deterministic, figures (PNG) are
rendered next to them unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import numpy as np

from . import analysis, plots
from .attacks import AttackConfig, compute_budgets, run_attack, save_perturbation
from .config import ExperimentConfig, apply_override
from .data import (
    Split,
    karate_club,
    load_split,
    make_split,
    sample_csbm,
    save_split,
)
from .errors import ConfigError, DataError, GraphRobustError, NumericError
from .graph import Graph, apply_flips, load_graph, save_graph
from .models import load_checkpoint, save_checkpoint
from .rng import child_seed
from .training import (
    accuracy,
    save_history,
    self_train,
    train_adversarial,
    train_standard,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage to 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="graphrobust", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=False):
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
        if config:
            p.add_argument("--config", required=True, help="experiment config JSON")
            p.add_argument("--override", action="append", default=[],
                           metavar="KEY.PATH=VALUE", help="dot-path config override")

    p = sub.add_parser("gen", help="write dataset files")
    p.add_argument("--karate", action="store_true", help="emit the 34-node club graph")
    p.add_argument("--config", default=None, help="config with a dataset section")
    p.add_argument("--override", action="append", default=[])
    common(p)

    p = sub.add_parser("split", help="sample a train/val/test split")
    p.add_argument("--data", required=True, help="directory with dataset files")
    p.add_argument("--per-class-train", type=int, default=20)
    p.add_argument("--per-class-val", type=int, default=20)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--transductive", action="store_true")
    common(p)

    p = sub.add_parser("train", help="train a model from a config")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    common(p, config=True)

    p = sub.add_parser("attack", help="attack a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--kind", default="prbcd")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--local-rule", default="unlimited",
                   choices=["half_degree", "quarter_degree", "unlimited"])
    common(p)

    p = sub.add_parser("eval", help="clean + robust accuracy ladder")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    common(p, config=True)

    p = sub.add_parser("spectrum", help="export the learned spectral filter")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    common(p)

    p = sub.add_parser("diffuse", help="export the total diffusion matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    common(p)

    p = sub.add_parser("repro", help="full pipeline over the config's seed list")
    common(p, config=True)
    return parser


def _outdir(args, default: str) -> str:
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


def _load_data_dir(path: str) -> Graph:
    return load_graph(
        os.path.join(path, "edges.txt"),
        os.path.join(path, "features.csv"),
        os.path.join(path, "labels.csv"),
    )


def _load_experiment(args) -> ExperimentConfig:
    with open(args.config, encoding="utf-8") as fh:
        payload = json.load(fh)
    for item in getattr(args, "override", []):
        apply_override(payload, item)
    cfg = ExperimentConfig.from_dict(payload)
    if args.out:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seeds = [args.seed]
    return cfg


def _dataset_for(cfg: ExperimentConfig, seed: int) -> Graph:
    ds = cfg.dataset
    if ds.kind == "karate":
        return karate_club()
    if ds.kind == "files":
        return load_graph(ds.edges, ds.features, ds.labels, ds.n_classes)
    return sample_csbm(ds.csbm_params(child_seed(seed, "dataset")))


def _train_one(cfg: ExperimentConfig, graph: Graph, split: Split, seed: int):
    tcfg = cfg.train_config(seed)
    if tcfg.attack is not None:
        return train_adversarial(cfg.model, graph, split, tcfg)
    if tcfg.self_training:
        _, model, history = self_train(cfg.model, graph, split, tcfg)
        return model, history
    return train_standard(cfg.model, graph, split, tcfg)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_gen(args) -> int:
    out = _outdir(args, "dataset")
    if args.karate:
        graph = karate_club()
    elif args.config:
        cfg = _load_experiment(args)
        seed = args.seed if args.seed is not None else cfg.seeds[0]
        graph = _dataset_for(cfg, seed)
    else:
        raise ConfigError("gen needs --karate or --config")
    save_graph(graph,
               os.path.join(out, "edges.txt"),
               os.path.join(out, "features.csv"),
               os.path.join(out, "labels.csv"))
    print(f"wrote {graph.n} nodes / {graph.n_edges} edges to {out}")
    return EXIT_OK


def _cmd_split(args) -> int:
    graph = _load_data_dir(args.data)
    seed = args.seed if args.seed is not None else 0
    split = make_split(graph, args.per_class_train, args.per_class_val,
                       args.test_fraction, not args.transductive, seed)
    out = _outdir(args, args.data)
    path = os.path.join(out, "split.json")
    save_split(split, path)
    print(f"wrote {path} (train {len(split.train_labeled)}, val {len(split.val)}, "
          f"test {len(split.test)}, unlabeled {len(split.train_unlabeled)})")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _load_experiment(args)
    graph = _load_data_dir(args.data)
    split = load_split(args.split)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    model, history = _train_one(cfg, graph, split, seed)
    out = _outdir(args, cfg.out)
    header = f"config_hash={cfg.config_hash()} seed={seed}"
    save_checkpoint(model, os.path.join(out, "checkpoint.json"),
                    meta={"config_hash": cfg.config_hash(), "seed": seed})
    save_history(history, os.path.join(out, "history.csv"), header=header)
    if not args.no_figures:
        plots.plot_history(history.records, os.path.join(out, "history.png"))
    print(f"best epoch {history.best_epoch}; clean test accuracy "
          f"{accuracy(model, graph, split.test):.4f}; wrote {out}")
    return EXIT_OK


def _cmd_attack(args) -> int:
    model = load_checkpoint(args.checkpoint)
    graph = _load_data_dir(args.data)
    split = load_split(args.split)
    seed = args.seed if args.seed is not None else 0
    budget = compute_budgets(graph, split.test, args.epsilon, args.local_rule)
    acfg = AttackConfig(seed=seed)
    flips = run_attack(args.kind, model, graph, split.test, budget, acfg)
    clean = accuracy(model, graph, split.test)
    robust = accuracy(model, apply_flips(graph, flips), split.test) if len(flips) else clean
    out = _outdir(args, "attack-out")
    meta = {"seed": seed}
    save_perturbation(graph, flips, os.path.join(out, "perturbation.json"), meta=meta)
    report = {
        "epsilon": args.epsilon, "delta": int(budget.global_delta),
        "local_rule": args.local_rule, "flips": int(len(flips)),
        "clean_acc": clean, "robust_acc": robust, "seed": seed,
    }
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh)
        fh.write("\n")
    print(json.dumps(report))
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_experiment(args)
    model = load_checkpoint(args.checkpoint)
    graph = _load_data_dir(args.data)
    split = load_split(args.split)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    rows = analysis.evaluate(model, graph, split, cfg.eval_attacks, seed,
                             attack_config=_eval_attack_config(cfg, seed))
    out = _outdir(args, cfg.out)
    header = f"config_hash={cfg.config_hash()} seed={seed}"
    analysis.save_eval_report(rows, os.path.join(out, "eval.csv"), header=header)
    for r in rows:
        print(f"{r.attack} eps={r.epsilon} {r.local_rule}: clean {r.clean_acc:.4f} "
              f"robust {r.robust_acc:.4f}")
    return EXIT_OK


def _eval_attack_config(cfg: ExperimentConfig, seed: int) -> AttackConfig:
    kw = dict(cfg.eval_attack_config)
    return AttackConfig(
        block_size=int(kw.get("block_size", 10_000)),
        epochs=int(kw.get("epochs", 100)),
        finetune_epochs=int(kw.get("finetune_epochs", 25)),
        lr_base=float(kw.get("lr_base", 100.0)),
        lr_multiplier=float(kw.get("lr_multiplier", 1.0)),
        sample_tries=int(kw.get("sample_tries", 20)),
        seed=seed,
    )


def _cmd_spectrum(args) -> int:
    model = load_checkpoint(args.checkpoint)
    graph = _load_data_dir(args.data)
    filt = analysis.spectral_filter(model, graph)
    out = _outdir(args, "analysis-out")
    seed = args.seed if args.seed is not None else 0
    analysis.save_spectrum(filt, os.path.join(out, "spectrum.csv"),
                           header=f"config_hash=n/a seed={seed}")
    if not args.no_figures:
        plots.plot_spectrum(filt.eigenvalues, filt.response,
                            os.path.join(out, "spectrum.png"))
        plots.plot_gamma(analysis.normalize_gamma(model.gamma),
                         os.path.join(out, "gamma.png"))
    print(f"wrote spectrum for {graph.n} nodes to {out}")
    return EXIT_OK


def _cmd_diffuse(args) -> int:
    model = load_checkpoint(args.checkpoint)
    graph = _load_data_dir(args.data)
    matrix = analysis.total_diffusion(model, graph)
    out = _outdir(args, "analysis-out")
    seed = args.seed if args.seed is not None else 0
    analysis.save_diffusion(matrix, os.path.join(out, "diffusion.csv"),
                            header=f"config_hash=n/a seed={seed}")
    if not args.no_figures:
        plots.plot_diffusion(matrix, os.path.join(out, "diffusion.png"))
    print(f"wrote {graph.n}x{graph.n} diffusion matrix to {out}")
    return EXIT_OK


def aggregate(per_seed_rows: list) -> list[dict]:
    """Mean and standard error over seeds per (attack, epsilon, local_rule).

    A single seed reports sem 0 (flagged by n_seeds=1 in the output).
    """
    if not per_seed_rows:
        raise DataError("nothing to aggregate")
    groups: dict = {}
    for row in per_seed_rows:
        key = (row.attack, row.epsilon, row.local_rule)
        groups.setdefault(key, []).append(row)
    summary = []
    for (attack, eps, rule), rows in sorted(groups.items()):
        robust = np.array([r.robust_acc for r in rows])
        clean = np.array([r.clean_acc for r in rows])
        k = len(rows)
        sem = lambda x: float(x.std(ddof=1) / np.sqrt(k)) if k > 1 else 0.0
        summary.append({
            "attack": attack, "epsilon": eps, "local_rule": rule,
            "clean_acc_mean": float(clean.mean()), "clean_acc_sem": sem(clean),
            "robust_acc_mean": float(robust.mean()), "robust_acc_sem": sem(robust),
            "n_seeds": k,
        })
    return summary


def _cmd_repro(args) -> int:
    cfg = _load_experiment(args)
    out = _outdir(args, cfg.out)
    header = f"config_hash={cfg.config_hash()} seeds={','.join(map(str, cfg.seeds))}"
    all_rows = []
    for seed in cfg.seeds:
        graph = _dataset_for(cfg, seed)
        split = make_split(graph, cfg.split.per_class_train, cfg.split.per_class_val,
                           cfg.split.test_fraction, cfg.split.inductive,
                           child_seed(seed, "split"))
        model, history = _train_one(cfg, graph, split, seed)
        seed_dir = os.path.join(out, f"seed-{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        save_checkpoint(model, os.path.join(seed_dir, "checkpoint.json"),
                        meta={"config_hash": cfg.config_hash(), "seed": seed})
        save_history(history, os.path.join(seed_dir, "history.csv"),
                     header=f"config_hash={cfg.config_hash()} seed={seed}")
        rows = analysis.evaluate(model, graph, split, cfg.eval_attacks, seed,
                                 attack_config=_eval_attack_config(cfg, seed))
        analysis.save_eval_report(rows, os.path.join(seed_dir, "eval.csv"),
                                  header=f"config_hash={cfg.config_hash()} seed={seed}")
        all_rows.extend(rows)
        if model.basis in ("monomial", "chebyshev", "appnp") and graph.n <= 2000:
            filt = analysis.spectral_filter(model, graph)
            analysis.save_spectrum(filt, os.path.join(seed_dir, "spectrum.csv"),
                                   header=f"config_hash={cfg.config_hash()} seed={seed}")
            if not args.no_figures:
                plots.plot_spectrum(filt.eigenvalues, filt.response,
                                    os.path.join(seed_dir, "spectrum.png"))

    summary = aggregate(all_rows)
    results_path = os.path.join(out, "results.csv")
    with open(results_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["attack", "epsilon", "local_rule", "clean_acc_mean",
                         "clean_acc_sem", "robust_acc_mean", "robust_acc_sem", "n_seeds"])
        for row in summary:
            writer.writerow([row["attack"], repr(row["epsilon"]), row["local_rule"],
                             repr(row["clean_acc_mean"]), repr(row["clean_acc_sem"]),
                             repr(row["robust_acc_mean"]), repr(row["robust_acc_sem"]),
                             row["n_seeds"]])
    if not args.no_figures and any(r["epsilon"] > 0 for r in summary):
        plots.plot_results(summary, os.path.join(out, "results.png"))
    for row in summary:
        print(f"{row['attack']} eps={row['epsilon']} {row['local_rule']}: "
              f"robust {row['robust_acc_mean']:.4f} +/- {row['robust_acc_sem']:.4f}")
    print(f"wrote {results_path}")
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "split": _cmd_split,
    "train": _cmd_train,
    "attack": _cmd_attack,
    "eval": _cmd_eval,
    "spectrum": _cmd_spectrum,
    "diffuse": _cmd_diffuse,
    "repro": _cmd_repro,
}


def run_command(argv) -> int:
    """Parse and run; returns the process exit code instead of raising."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ConfigError, GraphRobustError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
