"""Command line entry point: ``safebems <stage> --config run.json --out-dir runs/x``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness as H
from .classify import classify
from .clustering import ClusterModel
from .data import load_building_csv, slice_window
from .tariffs import make_scenarios, write_scenarios

log = logging.getLogger("safebems")


def _config(args) -> H.RunConfig:
    cfg = H.RunConfig.load(args.config) if args.config else H.RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _model(out: Path) -> ClusterModel:
    path = out / "cluster" / "cluster_model.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `cluster` first")
    return ClusterModel.load(path)


def cmd_synthesize(cfg, out, args=None):
    corpus = H.load_corpus(cfg)
    H.write_corpus(corpus, out / "data")
    print(f"wrote {len(corpus.buildings)} buildings to {out / 'data'}")


def cmd_cluster(cfg, out, args=None):
    corpus = H.load_corpus(cfg)
    model = H.stage_cluster(cfg, corpus, out)
    from . import plots

    plots.plot_dendrogram(model.dendrogram, out / "plots" / "dendrogram.svg", model.w)
    print(f"clustered {len(model.assignments)} buildings into {model.w} groups")


def cmd_classify(cfg, out, args=None):
    model = _model(out)
    if args is not None and args.building:
        c = cfg.clustering
        b = load_building_csv(args.building)
        window = args.window or c.classify_window
        length = min(window, len(b) - c.classify_offset)
        k, V = classify(slice_window(b.load, c.classify_offset, length), model, c.metric)
        policy = model.policy_files.get(k)
        print(f"{b.building_id}: cluster {k}")
        print("dissimilarity " + " ".join(f"{v:.6g}" for v in V.values))
        print(f"policy {out / 'policies' / policy if policy else '(not trained yet)'}")
        return
    corpus = H.load_corpus(cfg)
    assignments = H.stage_classify(cfg, corpus, model, out)
    for b, k in sorted(assignments.items()):
        print(b, k)


def cmd_train(cfg, out, args=None):
    corpus = H.load_corpus(cfg)
    model = _model(out)
    fc = H.load_forecasters(cfg, model, out) or H.stage_forecasters(cfg, corpus, model, out)
    H.stage_train(cfg, corpus, model, fc, out)
    print(f"trained {model.w} policies in {out / 'policies'}")


def cmd_evaluate(cfg, out, args=None):
    corpus = H.load_corpus(cfg)
    model = _model(out)
    bundles = H.load_bundles(model, out)
    fc = H.load_forecasters(cfg, model, out)
    assignments = H.stage_classify(cfg, corpus, model, out)
    rows = H.stage_evaluate(cfg, corpus, assignments, bundles, fc, out)
    path = H.write_evaluations(rows, out / "report" / "evaluations.csv")
    print(f"wrote {len(rows)} rows to {path}")


def cmd_tariffs(cfg, out, args=None):
    corpus = H.load_corpus(cfg)
    tcfg = cfg.scenario_config()
    path = write_scenarios(make_scenarios(corpus.tariff, tcfg), out / "scenarios", tcfg)
    print(f"wrote {tcfg.n_scenarios} scenarios, manifest {path}")


def cmd_pipeline(cfg, out, args=None):
    H.run_pipeline(cfg, out)
    print(f"pipeline artifacts in {out}")


def cmd_report(cfg, out, args=None):
    rows = H.read_evaluations(out / "report" / "evaluations.csv")
    paths = H.emit_report(rows, out)
    nominal, _ = H.summarize(rows)
    for r in nominal:
        print(f"cluster {r['cluster']} {r['policy']:>6}: price {r['norm_price']:.3f} carbon {r['norm_carbon']:.3f}")
    print(f"tables in {paths['json'].parent}")


COMMANDS = {
    "synthesize": (cmd_synthesize, "data"),
    "cluster": (cmd_cluster, "cluster"),
    "classify": (cmd_classify, "classify"),
    "train": (cmd_train, "train"),
    "evaluate": (cmd_evaluate, "evaluate"),
    "tariffs": (cmd_tariffs, "tariffs"),
    "pipeline": (cmd_pipeline, None),
    "report": (cmd_report, "report"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="safebems", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="run config JSON (defaults if omitted)")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out-dir", default="runs/default")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "classify":
            s.add_argument("--building", help="classify one building CSV instead of the held-out set")
            s.add_argument("--window", type=int, help="hours of load used (default: config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    fn, stage = COMMANDS[args.command]
    out = Path(args.out_dir)
    try:
        cfg = _config(args)
    except Exception as exc:
        print(f"[config] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    try:
        fn(cfg, out, args)
    except H.StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"[{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
