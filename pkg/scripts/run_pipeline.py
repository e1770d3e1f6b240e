"""Run the full pipeline and print the nominal and scenario tables.

    python3 scripts/run_pipeline.py --out-dir runs/default
    python3 scripts/run_pipeline.py --config my.json --seed 3
"""

import argparse
import json
import logging
import time
from pathlib import Path

from safebems.harness import RunConfig, run_pipeline


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="runs/default")
    p.add_argument("--no-plots", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed

    def progress(rec):
        if rec["episode"] % 20 == 0:
            print(f"  ep {rec['episode']:4d}  norm cost {rec['normalized_price']:.3f}", flush=True)

    t0 = time.time()
    out = run_pipeline(cfg, Path(args.out_dir), plots=not args.no_plots, callback=progress)
    report = json.loads((out / "report" / "report.json").read_text())
    print(f"\ndone in {time.time() - t0:.0f}s\n")
    print("nominal (normalised price / carbon cost)")
    for r in report["table1_nominal"]:
        print(f"  cluster {r['cluster']} {r['policy']:>6}  {r['norm_price']:.3f}  {r['norm_carbon']:.3f}  n={r['n_buildings']}")
    print("forecasters (RMSE / R2, LSTM vs lag-1)")
    for r in report["table2_forecast"]:
        print(f"  {r['group']} {r['target']:>5}  {r['lstm_rmse']:.4f}/{r['lstm_r2']:.3f}  {r['lag_rmse']:.4f}/{r['lag_r2']:.3f}")
    print("scenarios (mean +- std of normalised price cost)")
    for r in report["table3_stochastic"]:
        print(f"  cluster {r['cluster']} {r['policy']:>6}  {r['norm_price_mean']:.3f} +- {r['norm_price_std']:.3f}")


if __name__ == "__main__":
    main()
