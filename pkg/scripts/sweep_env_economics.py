"""How much can storage save at all? Random vs a hand-written schedule
(discharge at peak, charge at night or from PV surplus) for a grid of
storage sizes, efficiencies and peak prices.

Used to pick the synthetic defaults: the gap between random and the
schedule is the room a learned policy has to show an improvement.
"""

import argparse
import itertools

import numpy as np

from safebems.data import generate_synthetic_corpus, make_tou_tariff
from safebems.env import BuildingEnv


def run(building, tariff, policy, rng):
    env = BuildingEnv(building, tariff)
    env.reset()
    peak = tariff.peak_mask()
    hour = building.load.calendar[:, 2]
    night = (hour >= 22) | (hour < 7)
    while not env.done:
        valid = np.flatnonzero(env.action_mask())
        t = env.t
        if policy == "random":
            a = rng.choice(valid)
        elif peak[t]:
            a = valid[0]
        elif night[t] or building.solar.values[t] > building.load.values[t]:
            a = valid[-1]
        else:
            a = env.config.l
        env.step(a)
    return env.totals["cost_price"] / env.totals["base_price"]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--buildings", type=int, default=9)
    p.add_argument("--hours", type=int, default=8760)
    args = p.parse_args()
    print("eff  hours  peak   per archetype: (random, schedule)")
    for eta, sh, peak in itertools.product((0.7, 0.8, 0.9), (3.0, 5.0), (0.25, 0.30)):
        corpus = generate_synthetic_corpus(args.buildings, args.hours, 3, seed=1, storage_hours=sh, efficiency=eta)
        tariff = make_tou_tariff(corpus.buildings[0].load.calendar, peak=peak)
        rng = np.random.default_rng(0)
        res = {}
        for b, lab in corpus:
            res.setdefault(int(lab), []).append((run(b, tariff, "random", rng), run(b, tariff, "schedule", rng)))
        cells = "  ".join(f"{k}: {np.mean(v, 0)[0]:.3f}/{np.mean(v, 0)[1]:.3f}" for k, v in sorted(res.items()))
        print(f"{eta:.1f}  {sh:4.1f}  {peak:.2f}   {cells}", flush=True)


if __name__ == "__main__":
    main()
