"""Train the three one-step forecasters on one synthetic building and test on
another of the same archetype; compare with the lag-1 baseline."""

import argparse
import time

import numpy as np

from safebems.data import generate_synthetic_corpus, make_tou_tariff
from safebems.forecast import ForecastConfig, evaluate, fit_forecaster


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--hidden", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    corpus = generate_synthetic_corpus(6, 8760, 3, seed=args.seed)
    train_b, test_b = [b for b, lab in corpus if lab == 0][:2]
    cal = train_b.load.calendar
    tariff = make_tou_tariff(cal)
    rng = np.random.default_rng(args.seed + 5)
    price_train = np.maximum(tariff.price + rng.normal(0, 0.01, len(cal)), 0)
    price_test = np.maximum(tariff.price + rng.normal(0, 0.01, len(cal)), 0)
    cfg = ForecastConfig(hidden=args.hidden, epochs=args.epochs, seed=args.seed)
    print(f"{'target':>6}  {'lstm rmse':>9} {'r2':>6}  {'lag rmse':>9} {'r2':>6}  time")
    for name, a, b in (("price", price_train, price_test), ("solar", train_b.solar.values, test_b.solar.values),
                       ("nsl", train_b.load.values, test_b.load.values)):
        t0 = time.time()
        fc = fit_forecaster(a, cal, name, cfg)
        pred = fc.one_step_series(b, cal)
        o = cfg.window
        rmse, r2 = evaluate(pred[o - 1 : -1], b[o:])
        lrmse, lr2 = evaluate(b[o - 1 : -1], b[o:])
        print(f"{name:>6}  {rmse:9.4f} {r2:6.3f}  {lrmse:9.4f} {lr2:6.3f}  {time.time() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
