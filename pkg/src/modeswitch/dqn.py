"""Deep Q-learning for the stay/switch decision.

Main and target Q-networks, a uniform replay buffer, epsilon-greedy
exploration with a linear schedule, squared Bellman error, periodic hard
target sync.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .env import AUTO, SWITCH, TELE, EpisodeConfig, ModeSwitchEnv, State
from .nn import checkpoint

N_ACTIONS = 2
CURVE_HEADER = ["step", "moving_avg_success", "mean_dZ", "loss", "epsilon"]


class StateEncoding:
    """[L_1..L_N, T/Z, is_tele, is_auto]."""

    def __init__(self, n_classes: int = 4):
        self.n_classes = n_classes

    @property
    def dim(self) -> int:
        return self.n_classes + 3

    def encode(self, state: State) -> np.ndarray:
        v = np.empty(self.dim)
        v[:self.n_classes] = state.intention
        v[self.n_classes] = state.T / state.Z
        v[self.n_classes + 1] = 1.0 if state.mode == TELE else 0.0
        v[self.n_classes + 2] = 1.0 if state.mode == AUTO else 0.0
        return v

    def descriptor(self) -> dict:
        return {"layout": "intention,T/Z,is_tele,is_auto", "n_classes": self.n_classes,
                "dim": self.dim}


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return self.actions.size


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def store(self, t: Transition) -> None:
        i = self.inserted % self.capacity
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.terminals[i] = t.terminal
        self.inserted += 1

    def __getitem__(self, k) -> Transition:
        """k-th oldest transition currently held."""
        n = len(self)
        if not 0 <= k < n:
            raise IndexError(k)
        i = (self.inserted - n + k) % self.capacity
        return Transition(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                          self.next_states[i].copy(), bool(self.terminals[i]))

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        """Uniform sampling with replacement."""
        if len(self) < n:
            raise ValueError(f"buffer holds {len(self)} transitions, cannot sample {n}")
        idx = rng.integers(0, len(self), size=n)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminals[idx])


@dataclass
class DQNHyperparams:
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_fraction: float = 0.2
    batch_size: int = 64
    target_sync: int = 1000
    buffer_capacity: int = 100_000
    lr: float = 1e-3
    optimizer: str = "adam"
    min_fill: int = 1000
    total_steps: int = 200_000
    hidden: tuple = (64, 64)
    log_every: int = 1000
    success_window: int = 100

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not (0.0 <= self.eps_end <= self.eps_start <= 1.0):
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if not 0.0 < self.eps_decay_fraction <= 1.0:
            raise ValueError("eps_decay_fraction must lie in (0, 1]")
        for name in ("batch_size", "target_sync", "buffer_capacity", "min_fill", "total_steps",
                     "log_every", "success_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.min_fill < self.batch_size:
            raise ValueError("min_fill must be at least one batch")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        self.hidden = tuple(self.hidden)

    def epsilon(self, step: int) -> float:
        decay = max(1, int(self.eps_decay_fraction * self.total_steps))
        frac = min(step / decay, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


def build_q_network(state_dim: int, hidden=(64, 64), rng=None) -> nn.Network:
    rng = np.random.default_rng(rng)
    layers, n_in = [], state_dim
    for h in hidden:
        layers.append(nn.Dense(n_in, h, "relu", rng))
        n_in = h
    layers.append(nn.Dense(n_in, N_ACTIONS, "linear", rng))
    return nn.Network(layers, state_dim)


def greedy(q: np.ndarray) -> np.ndarray:
    """Row-wise argmax with ties going to action 0 (stay)."""
    return (q[..., 1] > q[..., 0]).astype(np.int64)


def select_action(q_net: nn.Network, state_vec: np.ndarray, eps: float,
                  rng: np.random.Generator) -> int:
    if not 0.0 <= eps <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < eps:
        return int(rng.integers(N_ACTIONS))
    return int(greedy(q_net.forward(np.asarray(state_vec)[None, :]))[0])


def bellman_target(batch: Batch, target_net: nn.Network, gamma: float) -> np.ndarray:
    if len(batch) == 0:
        raise ValueError("empty batch")
    if gamma == 0.0:
        return batch.rewards.astype(float).copy()
    q_next = target_net.forward(batch.next_states).max(axis=1)
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, q_next)


def train_step(main_net: nn.Network, target_net: nn.Network, batch: Batch, gamma: float,
               optimizer) -> float:
    y = bellman_target(batch, target_net, gamma)
    q = main_net.forward(batch.states)
    rows = np.arange(len(batch))
    err = q[rows, batch.actions] - y
    loss = float(np.mean(err * err))
    nn.optim.check_finite_loss(loss, "DQN update")
    dq = np.zeros_like(q)
    dq[rows, batch.actions] = 2.0 * err / len(batch)
    main_net.backward(dq)
    optimizer.step(main_net)
    return loss


def sync_target(main_net: nn.Network, target_net: nn.Network) -> None:
    target_net.copy_from(main_net)


@dataclass
class TrainResult:
    net: nn.Network  # best by moving-average success
    final_net: nn.Network
    curve: list  # rows matching CURVE_HEADER
    best_success: float
    best_step: int
    episodes: int
    warnings: list = field(default_factory=list)


def train(env_factory, hp: DQNHyperparams | None = None, seed: int = 0, log_fn=None) -> TrainResult:
    """Algorithm loop: epsilon-greedy rollouts, replay, per-step updates, periodic sync."""
    hp = hp or DQNHyperparams()
    env: ModeSwitchEnv = env_factory()
    enc = StateEncoding(env.cfg.n_classes)
    env_ss, agent_ss, init_ss = np.random.SeedSequence(seed).spawn(3)
    env_rng, rng = np.random.default_rng(env_ss), np.random.default_rng(agent_ss)
    main = build_q_network(enc.dim, hp.hidden, np.random.default_rng(init_ss))
    target = main.clone()
    opt = nn.make_optimizer(hp.optimizer, hp.lr)
    buf = ReplayBuffer(min(hp.buffer_capacity, hp.total_steps), enc.dim)

    successes, shares = [], []
    curve, window_losses = [], []
    best, best_step, best_weights = -1.0, 0, main.get_weights()
    s = enc.encode(env.reset(env_rng))
    for step in range(1, hp.total_steps + 1):
        eps = hp.epsilon(step - 1)
        a = select_action(main, s, eps, rng)
        state, r, done = env.step(a)
        s2 = enc.encode(state)
        buf.store(Transition(s, a, r, s2, done))
        if done:
            res = env.result()
            successes.append(res.success)
            shares.append(res.tele_share)
            s = enc.encode(env.reset(env_rng))
        else:
            s = s2
        if len(buf) >= hp.min_fill:
            window_losses.append(train_step(main, target, buf.sample(hp.batch_size, rng),
                                            hp.gamma, opt))
        if step % hp.target_sync == 0:
            sync_target(main, target)
        if step % hp.log_every == 0:
            recent = successes[-hp.success_window:]
            ma = float(np.mean(recent)) if recent else 0.0
            dz = float(np.mean(shares[-hp.success_window:])) if recent else 1.0
            loss = float(np.mean(window_losses)) if window_losses else float("nan")
            window_losses = []
            curve.append((step, ma, dz, loss, eps))
            if log_fn:
                log_fn(step, ma, dz, loss, eps)
            if len(recent) >= hp.success_window and ma > best:
                best, best_step, best_weights = ma, step, main.get_weights()
    final = main.clone()
    main.set_weights(best_weights)
    warnings = collapse_warnings(main, enc, seed=seed)
    # no return exceeds Z + 100, so a Bellman error beyond its square means Q ran away
    ceiling = (env.cfg.Z + 100.0) ** 2
    blown = [row[0] for row in curve if row[3] > ceiling]
    if blown:
        warnings.append(f"loss explosion: window loss above {ceiling:g} at step {blown[0]}")
    return TrainResult(main, final, curve, best, best_step, len(successes), warnings)


def collapse_warnings(net: nn.Network, enc: StateEncoding, n_probe: int = 512, seed: int = 0):
    """Flag a policy that picks the same action everywhere on random probe states."""
    rng = np.random.default_rng(seed)
    L = rng.dirichlet(np.ones(enc.n_classes), size=n_probe)
    t = rng.random((n_probe, 1))
    mode = rng.integers(0, 2, n_probe)
    x = np.hstack([L, t, (mode == TELE)[:, None], (mode == AUTO)[:, None]]).astype(float)
    acts = greedy(net.forward(x))
    if acts.min() == acts.max():
        return [f"policy collapsed to action {int(acts[0])} on all {n_probe} probe states"]
    return []


@dataclass
class EvalSummary:
    episodes: int
    success: float
    success_se: float
    tele_share: float
    load: float
    reward: float
    detections: float

    def meets(self, psi: float) -> bool:
        return self.success > psi


def evaluate(net: nn.Network, cfg: EpisodeConfig, episodes: int = 10_000, seed: int = 0,
             lockstep: int = 512) -> EvalSummary:
    """Greedy rollouts, run in lock-step groups so the Q-net sees one batch per slot."""
    enc = StateEncoding(cfg.n_classes)
    seqs = np.random.SeedSequence(seed).spawn(episodes)
    succ, share, load, reward, det = [], [], [], [], []
    for g in range(0, episodes, lockstep):
        envs = [ModeSwitchEnv(cfg) for _ in range(min(lockstep, episodes - g))]
        states = [e.reset(np.random.default_rng(seqs[g + i])) for i, e in enumerate(envs)]
        live = list(range(len(envs)))
        while live:
            x = np.stack([enc.encode(states[i]) for i in live])
            acts = greedy(net.forward(x))
            for i, a in zip(live, acts):
                states[i] = envs[i].step(int(a))[0]
            live = [i for i in live if not envs[i].done]
        for e in envs:
            res = e.result()
            succ.append(res.success)
            share.append(res.tele_share)
            load.append(res.load)
            reward.append(res.reward)
            det.append(res.n_detections)
    succ = np.array(succ, dtype=float)
    se = float(succ.std(ddof=1) / math.sqrt(succ.size)) if succ.size > 1 else float("nan")
    return EvalSummary(succ.size, float(succ.mean()), se, float(np.mean(share)),
                       float(np.mean(load)), float(np.mean(reward)), float(np.mean(det)))


def policy_fn(net: nn.Network, n_classes: int = 4):
    enc = StateEncoding(n_classes)

    def policy(state: State) -> int:
        return int(greedy(net.forward(enc.encode(state)[None, :]))[0])

    return policy


def save_policy(net: nn.Network, path, hp: DQNHyperparams | None = None, n_classes: int = 4) -> None:
    meta = {"state_encoding": StateEncoding(n_classes).descriptor()}
    if hp is not None:
        meta["hyperparams"] = asdict(hp)
    checkpoint.save(net, path, meta)


def load_policy(path) -> tuple[nn.Network, dict]:
    net, meta = checkpoint.load(path)
    if "state_encoding" not in meta:
        raise checkpoint.CheckpointError("checkpoint carries no state-encoding descriptor")
    return net, meta


def write_curve(rows, path, comments: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for step, ma, dz, loss, eps in rows:
            w.writerow([step, repr(float(ma)), repr(float(dz)), repr(float(loss)), repr(float(eps))])


__all__ = ["StateEncoding", "Transition", "Batch", "ReplayBuffer", "DQNHyperparams",
           "build_q_network", "select_action", "bellman_target", "train_step", "sync_target",
           "train", "evaluate", "EvalSummary", "TrainResult", "save_policy", "load_policy",
           "policy_fn", "write_curve", "SWITCH"]
