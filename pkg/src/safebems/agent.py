"""Maskable PPO over the discretised storage action space."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import MASK_TOL, ActionBounds, action_table
from .nn import MLP, Adam, clip_grad_norm

log = logging.getLogger(__name__)

MASK_LOGIT = -1e8
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class ActionTable:
    l: int = 10

    @property
    def values(self) -> np.ndarray:
        return action_table(self.l)

    @property
    def idle(self) -> int:
        return self.l

    def __len__(self):
        return 2 * self.l + 1

    def nearest_valid(self, a: float, mask) -> int:
        """Index of the valid entry closest to fraction ``a`` (lower index on ties)."""
        valid = np.flatnonzero(mask)
        return int(valid[np.argmin(np.abs(self.values[valid] - a))])


@dataclass
class ObsNormalizer:
    mean: np.ndarray
    std: np.ndarray
    clip: float = 10.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)

    @classmethod
    def fit(cls, observations) -> "ObsNormalizer":
        obs = np.asarray(observations, dtype=np.float64)
        std = obs.std(axis=0)
        std = np.where(std < STD_FLOOR, 1.0, std)  # constant features map to 0
        return cls(obs.mean(axis=0), std)

    def __call__(self, obs):
        return np.clip((obs - self.mean) / self.std, -self.clip, self.clip)


def mask_from_bounds(bounds: ActionBounds, table: ActionTable) -> np.ndarray:
    v = table.values
    mask = (v >= bounds.low - MASK_TOL) & (v <= bounds.high + MASK_TOL)
    mask[table.idle] = True
    return mask


def masked_logits(logits, mask):
    return np.where(mask, logits, MASK_LOGIT)


def masked_distribution(logits, mask) -> np.ndarray:
    """Softmax over logits with invalid entries replaced by a large negative
    constant; works on a single vector or a batch of rows."""
    mask = np.asarray(mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ValueError("every row needs at least one valid action")
    z = masked_logits(np.asarray(logits, dtype=np.float64), mask)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def masked_log_softmax(logits, mask):
    z = masked_logits(logits, mask)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class TrajectoryBatch:
    obs: np.ndarray
    actions: np.ndarray
    masks: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    logp: np.ndarray
    dones: np.ndarray
    last_value: float = 0.0

    def __post_init__(self):
        if not np.all(self.masks[np.arange(len(self.actions)), self.actions]):
            raise ValueError("batch records an action outside its mask")

    def __len__(self):
        return len(self.actions)


def advantages(batch: TrajectoryBatch, gamma=0.99, lam=0.95, normalize=True):
    """Generalised advantage estimates and return targets.

    Returns ``(adv, returns)``; ``returns`` are the un-normalised advantages
    plus values, ``adv`` is normalised to zero mean and unit std when
    ``normalize`` and the batch has more than one step.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    adv = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        nonterminal = 1.0 - float(batch.dones[t])
        next_value = batch.last_value if t == n - 1 else batch.values[t + 1]
        delta = batch.rewards[t] + gamma * next_value * nonterminal - batch.values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    returns = adv + batch.values
    if normalize and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-12)
    return adv, returns


def ppo_ratio(logp_new, logp_old):
    return np.exp(np.asarray(logp_new) - np.asarray(logp_old))


def clipped_surrogate(r, A, eps):
    if eps <= 0:
        raise ValueError("clip radius must be > 0")
    r = np.asarray(r, dtype=np.float64)
    return np.minimum(r * A, np.clip(r, 1 - eps, 1 + eps) * A)


@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    lr: float = 1e-3
    epochs: int = 10
    minibatch: int = 256
    hidden: tuple = (64, 64)
    max_grad_norm: float = 0.5
    episodes: int = 200
    horizon: int = 2190
    norm_steps: int = 8760 * 5
    # learn from reward minus the idle-action reward of the same step
    relative_reward: bool = True

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be > 0")
        self.hidden = tuple(self.hidden)


@dataclass
class PolicyBundle:
    policy: MLP
    value: MLP
    normalizer: ObsNormalizer
    table: ActionTable = field(default_factory=ActionTable)
    config: PPOConfig = field(default_factory=PPOConfig)
    cluster_id: int = 0
    env_config: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @classmethod
    def create(cls, obs_dim, normalizer, table=None, config=None, cluster_id=0, seed=0, env_config=None):
        table = table or ActionTable()
        config = config or PPOConfig()
        policy = MLP((obs_dim, *config.hidden, len(table)), seed=seed, out_scale=0.01)
        value = MLP((obs_dim, *config.hidden, 1), seed=seed + 1, out_scale=1.0)
        return cls(policy, value, normalizer, table, config, cluster_id, dict(env_config or {}))

    @property
    def gamma(self):
        return self.config.gamma

    @property
    def clip(self):
        return self.config.clip

    def distribution(self, obs, mask):
        return masked_distribution(self.policy.forward(self.normalizer(obs)), mask)

    def act(self, obs, mask, rng=None, greedy=False):
        """Return ``(action, logp, value)`` for one observation."""
        x = self.normalizer(obs)[None]
        logp_all = masked_log_softmax(self.policy.forward(x)[0], mask)
        if greedy:
            a = int(np.argmax(np.where(mask, logp_all, -np.inf)))
        else:
            p = np.exp(logp_all)
            a = int(rng.choice(p.size, p=p / p.sum()))
        v = float(self.value.forward(x)[0, 0])
        return a, float(logp_all[a]), v

    def digest(self) -> str:
        cfg = json.dumps({"ppo": _jsonable(asdict(self.config)), "env": self.env_config}, sort_keys=True)
        return hashlib.sha256(cfg.encode()).hexdigest()[:16]

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        obj = {
            "format": "safebems-policy",
            "version": 1,
            "cluster_id": self.cluster_id,
            "config": _jsonable(asdict(self.config)),
            "env_config": self.env_config,
            "config_digest": self.digest(),
            "action_table": {"l": self.table.l, "values": self.table.values.tolist()},
            "normalizer": {"mean": self.normalizer.mean.tolist(), "std": self.normalizer.std.tolist(), "clip": self.normalizer.clip},
            "policy": {"sizes": list(self.policy.sizes), "params": self.policy.state()},
            "value": {"sizes": list(self.value.sizes), "params": self.value.state()},
            "history": self.history,
        }
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "PolicyBundle":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("format") != "safebems-policy" or obj.get("version") != 1:
            raise ValueError(f"{path}: not a version-1 policy file")
        norm = obj["normalizer"]
        return cls(
            MLP.from_state(obj["policy"]["sizes"], obj["policy"]["params"]),
            MLP.from_state(obj["value"]["sizes"], obj["value"]["params"]),
            ObsNormalizer(np.array(norm["mean"]), np.array(norm["std"]), norm["clip"]),
            ActionTable(obj["action_table"]["l"]),
            PPOConfig(**obj["config"]),
            obj["cluster_id"],
            obj["env_config"],
            obj.get("history", []),
        )


def _jsonable(d):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def collect_normalization_stats(env_factory, steps=8760 * 5, seed=0) -> ObsNormalizer:
    """Observation statistics under a random agent.

    ``env_factory(rng)`` returns a fresh environment; the agent draws a
    fraction uniformly in the current valid interval and snaps it to the
    nearest valid table entry. Episodes are restarted whenever they end.
    """
    rng = np.random.default_rng(seed)
    env = env_factory(rng)
    obs = env.reset()
    table = ActionTable(env.config.l)
    collected = [obs]
    while len(collected) < steps:
        b = env.bounds()
        a = table.nearest_valid(rng.uniform(b.low, b.high), env.action_mask())
        out = env.step(a)
        if out.done:
            env = env_factory(rng)
            collected.append(env.reset())
        else:
            collected.append(out.observation)
    return ObsNormalizer.fit(np.array(collected[:steps]))


def ppo_loss_and_grads(bundle: PolicyBundle, obs, actions, masks, logp_old, adv, returns):
    """Clipped-surrogate PPO loss (to minimise) and gradients for both nets.

    ``obs`` must already be normalised. Loss =
    ``-mean(surrogate) + vf_coef * mean((V - R)^2) - ent_coef * mean(entropy)``.
    """
    cfg = bundle.config
    n = len(actions)
    rows = np.arange(n)
    logits = bundle.policy.forward(obs, cache=True)
    logp_all = masked_log_softmax(logits, masks)
    p = np.where(masks, np.exp(logp_all), 0.0)
    logp = logp_all[rows, actions]
    r = np.exp(logp - logp_old)
    surr = clipped_surrogate(r, adv, cfg.clip)
    plogp = np.where(masks, p * logp_all, 0.0)
    entropy = -plogp.sum(axis=1)
    v = bundle.value.forward(obs, cache=True)[:, 0]
    v_err = v - returns
    loss_pi = -surr.mean()
    loss_v = float(np.mean(v_err**2))
    loss = loss_pi + cfg.vf_coef * loss_v - cfg.ent_coef * entropy.mean()

    unclipped = r * adv <= np.clip(r, 1 - cfg.clip, 1 + cfg.clip) * adv
    dlogp = np.where(unclipped, -adv * r, 0.0) / n
    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    dlogits = dlogp[:, None] * (onehot - p)
    # d(-c * H)/dz_i = c * p_i * (log p_i + H)
    dlogits += cfg.ent_coef / n * np.where(masks, p * (logp_all + entropy[:, None]), 0.0)
    dlogits = np.where(masks, dlogits, 0.0)
    g_pi = bundle.policy.backward(dlogits)
    g_v = bundle.value.backward((cfg.vf_coef * 2.0 * v_err / n)[:, None])
    stats = {
        "loss": float(loss),
        "policy_loss": float(loss_pi),
        "value_loss": loss_v,
        "entropy": float(entropy.mean()),
        "approx_kl": float(np.mean((r - 1) - (logp - logp_old))),
        "clip_frac": float(np.mean(np.abs(r - 1) > cfg.clip)),
    }
    return float(loss), g_pi, g_v, stats


class TrainingDiverged(FloatingPointError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state or {}


@dataclass
class Optimizers:
    policy: Adam
    value: Adam

    @classmethod
    def for_bundle(cls, bundle: PolicyBundle):
        return cls(Adam(bundle.policy.params, bundle.config.lr), Adam(bundle.value.params, bundle.config.lr))


def ppo_update(bundle: PolicyBundle, batch: TrajectoryBatch, epochs=None, minibatch=None, rng=None, optim=None):
    """Several epochs of minibatch Adam on the PPO loss; masks are re-applied
    at every evaluation. Returns averaged diagnostics."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    cfg = bundle.config
    epochs = cfg.epochs if epochs is None else epochs
    minibatch = cfg.minibatch if minibatch is None else minibatch
    rng = rng or np.random.default_rng(0)
    optim = optim or Optimizers.for_bundle(bundle)
    adv, returns = advantages(batch, cfg.gamma, cfg.lam)
    obs = bundle.normalizer(batch.obs)
    diags = []
    for _ in range(epochs):
        order = rng.permutation(len(batch))
        for k in range(0, len(batch), minibatch):
            idx = order[k : k + minibatch]
            loss, g_pi, g_v, stats = ppo_loss_and_grads(
                bundle, obs[idx], batch.actions[idx], batch.masks[idx], batch.logp[idx], adv[idx], returns[idx]
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite PPO loss ({stats})",
                    {"stats": stats, "indices": idx.tolist(), "policy": bundle.policy.state()},
                )
            clip_grad_norm(g_pi, cfg.max_grad_norm)
            clip_grad_norm(g_v, cfg.max_grad_norm)
            optim.policy.step(g_pi)
            optim.value.step(g_v)
            diags.append(stats)
    return bundle, {k: float(np.mean([d[k] for d in diags])) for k in diags[0]}


def rollout(env, bundle: PolicyBundle, rng, t0=0, horizon=None, relative=False) -> TrajectoryBatch:
    obs = env.reset(t0, horizon)
    rec = {k: [] for k in ("obs", "actions", "masks", "rewards", "values", "logp", "dones")}
    while True:
        mask = env.action_mask()
        a, logp, v = bundle.act(obs, mask, rng)
        out = env.step(a)
        rec["obs"].append(obs)
        rec["actions"].append(a)
        rec["masks"].append(mask)
        rec["rewards"].append(out.reward - out.info["idle_reward"] if relative else out.reward)
        rec["values"].append(v)
        rec["logp"].append(logp)
        rec["dones"].append(out.done)
        obs = out.observation
        if out.done:
            break
    return TrajectoryBatch(**{k: np.array(v) for k, v in rec.items()}, last_value=0.0)


def train_cluster_policy(envs, config: PPOConfig | None = None, seed=0, cluster_id=0, env_config=None, callback=None):
    """Train one policy on a cluster of building environments.

    Each episode samples a building uniformly and a random day-aligned start,
    runs ``config.horizon`` steps, then performs one PPO update. The history
    records per-episode return and normalised price cost.
    """
    config = config or PPOConfig()
    if not envs:
        raise ValueError("empty cluster")
    rng = np.random.default_rng(seed)
    horizon = min(config.horizon, min(len(e.building) for e in envs))

    def factory(r):
        return envs[int(r.integers(len(envs)))]

    normalizer = collect_normalization_stats(factory, config.norm_steps, seed)
    bundle = PolicyBundle.create(envs[0].obs_dim, normalizer, ActionTable(envs[0].config.l), config, cluster_id, seed, env_config)
    optim = Optimizers.for_bundle(bundle)
    for ep in range(config.episodes):
        env = envs[int(rng.integers(len(envs)))]
        days = (len(env.building) - horizon) // 24
        t0 = 24 * int(rng.integers(days + 1))
        batch = rollout(env, bundle, rng, t0, horizon, config.relative_reward)
        _, diag = ppo_update(bundle, batch, rng=rng, optim=optim)
        tot = env.totals
        row = {
            "episode": ep,
            "building": env.building.building_id,
            "return": float(batch.rewards.sum()),
            "normalized_price": tot["cost_price"] / tot["base_price"] if tot["base_price"] > 0 else 1.0,
            **diag,
        }
        bundle.history.append(row)
        if callback:
            callback(row)
        log.info("cluster %d episode %d return %.3f norm %.3f", cluster_id, ep, row["return"], row["normalized_price"])
    return bundle
