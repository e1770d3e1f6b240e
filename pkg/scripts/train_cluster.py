"""Train one PPO policy on the buildings of a single synthetic archetype and
evaluate it greedily on unseen buildings of the same archetype."""

import argparse
import time

from safebems.agent import PPOConfig, train_cluster_policy
from safebems.data import generate_synthetic_corpus, make_tou_tariff
from safebems.env import BuildingEnv
from safebems.harness import RandomPolicy, RBCPolicy, RunConfig, TrainedPolicy, auto_reward_scale, evaluate


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--archetype", type=int, default=0)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save")
    args = p.parse_args()

    corpus = generate_synthetic_corpus(30, 8760, 3, seed=args.seed)
    tariff = make_tou_tariff(corpus.buildings[0].load.calendar)
    members = [b for b, lab in corpus if lab == args.archetype]
    train, test = members[:8], members[8:]
    env_cfg = RunConfig().env_config(auto_reward_scale(train, tariff))
    env_cfg.zeta = args.zeta
    envs = [BuildingEnv(b, tariff, env_cfg) for b in train]

    t0 = time.time()

    def progress(rec):
        if rec["episode"] % 10 == 0:
            print(f"ep {rec['episode']:4d}  return {rec['return']:8.2f}  norm cost {rec['normalized_price']:.3f}"
                  f"  entropy {rec['entropy']:.2f}  {time.time() - t0:.0f}s", flush=True)

    bundle = train_cluster_policy(envs, PPOConfig(episodes=args.episodes), seed=args.seed, callback=progress)
    if args.save:
        bundle.save(args.save)
    for b in test:
        rows = [evaluate(pol, b, tariff, env_config=env_cfg) for pol in (TrainedPolicy(bundle), RandomPolicy(1), RBCPolicy())]
        print(b.building_id, "  ".join(f"{r.policy} {r.norm_price:.3f}" for r in rows))


if __name__ == "__main__":
    main()
