"""Discrete-time mode-switching episode simulator.

An episode has Z decision slots and starts in teleoperation (TELE). Each
step the agent either stays or toggles the mode. A TELE slot exchanges one
packet (d += 1) and earns nothing; an AUTO slot earns 1. While in AUTO the
intention monitor compares the current estimate with the label committed
on entry and reverts to TELE on disagreement, unless the detector misses
(probability detect_fail). At T = Z the task outcome is drawn and a
terminal bonus of (Z - d)/Z * 100 is paid on success.

Success model. p_auto(f) is the autonomous completion probability for a
switch at fraction f (from eps_c(f), detect_fail and eps_t(f)). Every
entry into AUTO at fraction f is a launch that succeeds with probability

    F(f) = min(1, p_auto(f) / p_auto(1))    (0 if p_auto(1) = 0),

i.e. the reliability still missing at f relative to full observation.
A failed launch ends the episode at once as a task failure. An episode
that reaches T = Z succeeds with probability

    s * p_tele + (1 - s) * p_auto(1),    s = d/Z.

A single switch at f therefore succeeds with probability
F(f) * (f p_tele + (1 - f) p_auto(1)); with flat curves F = 1 and this is
the plain teleop/autonomy mixture at the realised teleop share, for any
policy. The cost of switching early is paid at the decision itself,
so it is visible to a learner that only sees (L, T/Z, mode).

All randomness of an episode comes from one (Z+1, 6) table of uniforms
("tape"). Row 0 feeds the reset: column 1 seeds the oracle latent,
column 2 picks the task label (or trajectory), column 4 is the success
draw. Row T feeds the transition into observation length T: column 0
redraws the latent, 1 is the new latent, 2 picks a wrong class, 3 shapes
the confidence, 4 is the detector draw; column 5 of row T is the launch
draw for an AUTO entry in slot T. The batch kernel consumes the same
tape layout, so scripted rollouts agree episode for episode.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import comms, kernels
from .intent import AccuracyCurve, IntentionEstimate, oracle_probabilities
from .trajectories import window

TELE, AUTO = 0, 1
MODE_NAMES = ("TELE", "AUTO")
STAY, SWITCH = 0, 1
TAPE_COLUMNS = 6
SOURCES = ("oracle", "trained")
LOAD_MODELS = ("fixed", "fbl")
# mode: mode the slot ran in; mode_after: mode once the step's detector check is done
TRACE_HEADER = ["slot", "mode", "action", "reward", "argmax_intention", "cause", "mode_after"]


def default_channel() -> comms.ChannelConfig:
    # gamma = 4, blocklength 256
    return comms.ChannelConfig(large_scale_gain=1e-6, small_scale_gain=1.0, transmit_power=0.1,
                               noise_psd=2.5e-14, bandwidth=1e6, tx_duration=2.56e-4)


@dataclass(frozen=True)
class State:
    intention: np.ndarray
    T: int
    Z: int
    mode: int

    @property
    def fraction(self) -> float:
        return self.T / self.Z

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.intention))


@dataclass
class EpisodeConfig:
    Z: int = 50
    n_classes: int = 4
    label: int | None = None  # None: drawn per episode
    channel: comms.ChannelConfig = field(default_factory=default_channel)
    budget: comms.ReliabilityBudget = field(default_factory=comms.ReliabilityBudget)
    rho: float = 0.85
    psi: float = 0.85
    detect_fail: float = 0.05
    eps_c: AccuracyCurve = field(default_factory=lambda: AccuracyCurve.constant(0.1))
    eps_t: AccuracyCurve = field(default_factory=lambda: AccuracyCurve.constant(0.05))
    persistence: float = 0.9
    bits_per_slot: float = 256.0
    load_model: str = "fixed"
    source: str = "oracle"
    classifier: object = None  # intent.Classifier when source == "trained"
    trajectories: list | None = None

    def __post_init__(self):
        if self.Z < 20:
            raise ValueError("Z must be >= 20")
        if self.n_classes < 2:
            raise ValueError("need at least two task classes")
        if self.label is not None and not 0 <= self.label < self.n_classes:
            raise ValueError(f"label {self.label} outside [0, {self.n_classes})")
        for name in ("rho", "psi", "detect_fail", "persistence"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if not self.bits_per_slot > 0:
            raise ValueError("bits_per_slot must be positive")
        if self.load_model not in LOAD_MODELS:
            raise ValueError(f"load_model must be one of {LOAD_MODELS}")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        if self.source == "trained" and (self.classifier is None or not self.trajectories):
            raise ValueError("the trained source needs a classifier and trajectories")

    @property
    def p_mu(self) -> float:
        return comms.p_tele(self.budget, self.rho)

    def p_auto_at(self, fraction) -> np.ndarray:
        """Autonomous completion probability for an AUTO stint entered at ``fraction``."""
        ec = np.asarray(self.eps_c(fraction))
        et = np.asarray(self.eps_t(fraction))
        return ((1.0 - ec) + ec * (1.0 - self.detect_fail)) * (1.0 - et)

    @property
    def p_auto_full(self) -> float:
        return float(self.p_auto_at(1.0))

    def launch_prob(self, fraction) -> np.ndarray:
        """F(f): probability that an AUTO entry at ``fraction`` does not fail outright."""
        full = self.p_auto_full
        if full <= 0.0:
            # autonomy can never complete the task: every launch fails
            return np.zeros_like(np.asarray(fraction, dtype=float))
        return np.minimum(1.0, self.p_auto_at(fraction) / full)

    def load(self, d: int) -> float:
        if self.load_model == "fixed":
            return comms.fixed_payload_load(d, self.Z, self.bits_per_slot)
        return comms.communication_load(d, self.Z, self.channel, self.budget.decoding_error)

    def with_(self, **kw) -> "EpisodeConfig":
        return replace(self, **kw)


@dataclass
class EpisodeResult:
    success: bool
    d: int
    Z: int
    load: float
    switch_log: list  # (slot, from, to, cause)
    reward: float
    n_auto: int
    p_success: float  # completion probability at the end, 0 after a failed launch
    label: int
    trace: list = field(default_factory=list)
    failed_at: int = -1  # slot of a failed launch, -1 if none

    @property
    def tele_share(self) -> float:
        return self.d / self.Z

    @property
    def n_detections(self) -> int:
        return sum(1 for s in self.switch_log if s[3] == "detection")


class EpisodeDone(RuntimeError):
    pass


def success_probability(cfg: EpisodeConfig, d, failed=False):
    """Completion probability of an episode that reached T = Z (arrays ok)."""
    s = np.asarray(d, dtype=float) / cfg.Z
    p = s * cfg.p_mu + (1.0 - s) * cfg.p_auto_full
    return np.where(failed, 0.0, p)


def success_model(cfg: EpisodeConfig, d: int, entry_fractions, launch_draws, u: float) -> bool:
    """Task outcome from the TELE slot count, the AUTO entries and their draws.

    ``entry_fractions[i]`` is where AUTO entry i happened and
    ``launch_draws[i]`` its uniform; ``u`` is the terminal draw.
    """
    f = np.asarray(entry_fractions, dtype=float)
    if f.size and np.any(np.asarray(launch_draws, dtype=float) >= cfg.launch_prob(f)):
        return False
    return bool(u < success_probability(cfg, d))


def expected_success(cfg: EpisodeConfig, theta: float) -> float:
    """Closed form for one switch at theta with no detector reverts."""
    fire = math.ceil(theta * cfg.Z - 1e-9)
    if fire >= cfg.Z:
        return cfg.p_mu
    return float(cfg.launch_prob(fire / cfg.Z) * success_probability(cfg, fire))


def threshold_success_exact(cfg: EpisodeConfig, theta: float) -> float:
    """Exact success probability of the threshold policy under the oracle, re-launches included.

    The oracle latent only matters through which gap between the eps_c grid
    values it falls in, and the wrong class is redrawn every slot, so a
    forward pass over (latent interval, committed label correct?) is exact.
    With threshold policies d always equals the firing slot: a detector
    revert is re-entered in the same slot.
    """
    if cfg.source != "oracle":
        raise ValueError("exact evaluation supports the oracle source only")
    Z, N = cfg.Z, cfg.n_classes
    fire = math.ceil(theta * Z - 1e-9)
    if fire >= Z:
        return cfg.p_mu
    grid = np.arange(Z + 1) / Z
    e = np.asarray(cfg.eps_c(grid), dtype=float)
    launch = np.asarray(cfg.launch_prob(grid), dtype=float)
    cuts = np.unique(np.concatenate([[0.0, 1.0], np.clip(e, 0.0, 1.0)]))
    mass = np.diff(cuts)
    lo = cuts[:-1]  # interval k is [cuts[k], cuts[k+1]); correct at t iff lo >= e[t]
    keep, redraw = cfg.persistence, 1.0 - cfg.persistence
    miss = cfg.detect_fail
    both_wrong_differ = (N - 2) / (N - 1) if N > 1 else 0.0

    def step_latent(p):
        # p: (K, 2) mass over interval x committed-correct, summed over intervals on redraw
        return keep * p + redraw * mass[:, None] * p.sum(axis=0, keepdims=True)

    # TELE until fire: only the latent evolves; start from the reset draw
    lat = mass.copy()
    for t in range(1, fire + 1):
        lat = keep * lat + redraw * mass * lat.sum()
    # entry at fire: committed = argmax at fire (uniform -> class 0 before any observation)
    if fire == 0:
        p_ok = (1.0 if cfg.label == 0 else 0.0) if cfg.label is not None else 1.0 / N
        ok = np.full(len(mass), p_ok)
    else:
        ok = (lo >= e[fire]).astype(float)
    p = np.stack([lat * (1 - ok), lat * ok], axis=1) * launch[fire]
    for t in range(fire + 1, Z + 1):
        p = step_latent(p)
        if t == Z:
            break
        correct = lo >= e[t]
        # chance the detector fires, per (interval, committed state)
        mism = np.where(correct[:, None], [1.0, 0.0], [both_wrong_differ, 1.0])
        fires = mism * (1.0 - miss)
        stay = p * (1.0 - fires)
        moved = (p * fires).sum(axis=1) * launch[t]
        relaunch = np.zeros_like(p)
        relaunch[:, 1] = np.where(correct, moved, 0.0)
        relaunch[:, 0] = np.where(correct, 0.0, moved)
        p = stay + relaunch
    return float(p.sum() * success_probability(cfg, fire))


class ModeSwitchEnv:
    def __init__(self, cfg: EpisodeConfig):
        self.cfg = cfg
        self.done = True

    # -- episode lifecycle
    def reset(self, rng: np.random.Generator | int | None = None, tape: np.ndarray | None = None,
              trace: bool = False) -> State:
        cfg = self.cfg
        if tape is None:
            rng = np.random.default_rng(rng)
            tape = rng.random((cfg.Z + 1, TAPE_COLUMNS))
        elif tape.shape != (cfg.Z + 1, TAPE_COLUMNS):
            raise ValueError(f"tape must have shape {(cfg.Z + 1, TAPE_COLUMNS)}")
        self.tape = tape
        self.T = 0
        self.mode = TELE
        self.d = 0
        self.n_auto = 0
        self.failed_at = -1
        self.committed = -1
        self.reward = 0.0
        self.switch_log = []
        self.trace = [] if trace else None
        self.done = False
        self.latent = tape[0, 1]
        if cfg.source == "trained":
            trajs = cfg.trajectories
            self.traj = trajs[min(int(tape[0, 2] * len(trajs)), len(trajs) - 1)]
            self.label = self.traj.label
            self._estimates = self._classifier_estimates()
        else:
            self.label = cfg.label if cfg.label is not None else \
                min(int(tape[0, 2] * cfg.n_classes), cfg.n_classes - 1)
        self.intention = np.full(cfg.n_classes, 1.0 / cfg.n_classes)
        return self.state

    @property
    def state(self) -> State:
        return State(self.intention.copy(), self.T, self.cfg.Z, self.mode)

    def _classifier_estimates(self):
        cfg = self.cfg
        prefixes = [window(self.traj, t / cfg.Z).samples for t in range(1, cfg.Z + 1)]
        return cfg.classifier.predict_proba(prefixes)

    def _observe(self):
        """Update the intention estimate for the new observation length T."""
        cfg = self.cfg
        row = self.tape[self.T]
        if cfg.source == "trained":
            p = self._estimates[self.T - 1]
            self.intention = p / p.sum()
            return
        if row[0] < 1.0 - cfg.persistence:
            self.latent = row[1]
        eps = float(cfg.eps_c(self.T / cfg.Z))
        self.intention = oracle_probabilities(self.label, eps, self.latent, row[2], row[3],
                                              cfg.n_classes)

    def _switch(self, to, cause):
        self.switch_log.append((self.T, MODE_NAMES[self.mode], MODE_NAMES[to], cause))
        self.mode = to
        if to == AUTO:
            self.committed = int(np.argmax(self.intention))
            if self.tape[self.T, 5] >= float(self.cfg.launch_prob(self.T / self.cfg.Z)):
                self.failed_at = self.T

    def step(self, action: int):
        if self.done:
            raise EpisodeDone("step() called on a finished episode; call reset() first")
        if action not in (STAY, SWITCH):
            raise ValueError(f"action must be 0 or 1, got {action!r}")
        cfg = self.cfg
        slot = self.T
        cause = ""
        if action == SWITCH:
            self._switch(AUTO if self.mode == TELE else TELE, "action")
            cause = "action"
        if self.failed_at >= 0:
            return self._finish_failed(slot, action, cause)
        mode_in_slot = self.mode
        if self.mode == TELE:
            self.d += 1
            r = 0.0
        else:
            self.n_auto += 1
            r = 1.0
        self.T += 1
        self._observe()
        if self.mode == AUTO and self.T < cfg.Z:
            if int(np.argmax(self.intention)) != self.committed and self.tape[self.T, 4] >= cfg.detect_fail:
                self._switch(TELE, "detection")
                cause = f"{cause}+detection" if cause else "detection"
        if self.T == cfg.Z:
            self.done = True
            self.p_success = float(success_probability(cfg, self.d))
            self.success = bool(self.tape[0, 4] < self.p_success)
            if self.success:
                r += (cfg.Z - self.d) / cfg.Z * 100.0
        self.reward += r
        if self.trace is not None:
            self.trace.append((slot, MODE_NAMES[mode_in_slot], action, r,
                               int(np.argmax(self.intention)), cause, MODE_NAMES[self.mode]))
        return self.state, r, self.done

    def _finish_failed(self, slot, action, cause):
        # the slot is never executed: no reward, no packet
        self.done = True
        self.success = False
        self.p_success = 0.0
        if self.trace is not None:
            self.trace.append((slot, MODE_NAMES[AUTO], action, 0.0,
                               int(np.argmax(self.intention)), f"{cause}+launch_failure",
                               MODE_NAMES[AUTO]))
        return self.state, 0.0, True

    def result(self) -> EpisodeResult:
        if not self.done:
            raise RuntimeError("episode still running")
        return EpisodeResult(self.success, self.d, self.cfg.Z, self.cfg.load(self.d),
                             list(self.switch_log), self.reward, self.n_auto, self.p_success,
                             self.label, list(self.trace or []), self.failed_at)


# ------------------------------------------------------------------ policies

def always_stay(state: State) -> int:
    return STAY


def threshold_policy(theta: float):
    """Scripted policy: teleoperate until T/Z >= theta, then (re-)enter AUTO.

    theta is the targeted teleoperation share; theta = 1 never switches.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")

    def policy(state: State) -> int:
        fire = math.ceil(theta * state.Z - 1e-9)
        return SWITCH if state.mode == TELE and state.T >= fire else STAY

    return policy


def run_episode(cfg: EpisodeConfig, policy, rng=None, trace: bool = False,
                tape: np.ndarray | None = None) -> EpisodeResult:
    env = ModeSwitchEnv(cfg)
    state = env.reset(rng, tape=tape, trace=trace)
    done = False
    while not done:
        state, _, done = env.step(policy(state))
    return env.result()


def write_trace(result: EpisodeResult, path, comments: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for slot, mode, action, r, am, cause, after in result.trace:
            w.writerow([slot, mode, action, repr(float(r)), am, cause, after])


# ----------------------------------------------------------- batch rollouts

@dataclass
class BatchOutcome:
    d: np.ndarray
    n_auto: np.ndarray
    p_success: np.ndarray
    success: np.ndarray
    n_detect: np.ndarray
    first_switch: np.ndarray
    failed_at: np.ndarray

    def __len__(self):
        return self.d.size

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts])
                     for f in ("d", "n_auto", "p_success", "success", "n_detect",
                               "first_switch", "failed_at")))


def make_tapes(rng: np.random.Generator, n: int, Z: int) -> np.ndarray:
    return rng.random((n, Z + 1, TAPE_COLUMNS))


def simulate_threshold(cfg: EpisodeConfig, thresholds, tapes: np.ndarray) -> BatchOutcome:
    """Scripted threshold rollouts through the compiled kernel (oracle source only)."""
    if cfg.source != "oracle":
        raise ValueError("batch rollouts support the oracle source only")
    n = tapes.shape[0]
    thresholds = np.broadcast_to(np.asarray(thresholds, dtype=float), (n,)).copy()
    if cfg.label is None:
        labels = np.minimum((tapes[:, 0, 2] * cfg.n_classes).astype(np.int64), cfg.n_classes - 1)
    else:
        labels = np.full(n, cfg.label, dtype=np.int64)
    grid = np.arange(cfg.Z + 1) / cfg.Z
    eps_c_at = np.asarray(cfg.eps_c(grid), dtype=float)
    launch_at = np.asarray(cfg.launch_prob(grid), dtype=float)
    d, n_auto, n_detect, first, failed_at = kernels.simulate_threshold_batch(
        thresholds, labels, np.ascontiguousarray(tapes), eps_c_at, launch_at,
        float(cfg.persistence), float(cfg.detect_fail), int(cfg.n_classes))
    p = success_probability(cfg, d, failed_at >= 0)
    return BatchOutcome(d, n_auto, p, tapes[:, 0, 4] < p, n_detect, first, failed_at)


def intention_estimate(state: State) -> IntentionEstimate:
    return IntentionEstimate(state.intention / state.intention.sum(), state.fraction)
