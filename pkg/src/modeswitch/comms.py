"""Finite-blocklength communication load and task-completion probabilities.

All rates are in bits/s/Hz with base-2 logarithms, loads in bits/slot.
Every function here is pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

LOG2E = math.log2(math.e)
# asymptote of the channel dispersion as snr -> inf, (log2 e)^2
DISPERSION_LIMIT = LOG2E**2


class RateUnderflowError(ValueError):
    """The dispersion penalty wipes out the capacity: no positive rate exists
    for this (blocklength, decoding error) pair."""


def _check_prob(name: str, p: float, open_interval: bool = False) -> None:
    if open_interval:
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {p!r}")
    elif not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")


@dataclass(frozen=True)
class ChannelConfig:
    """Radio parameters of one device's uplink."""

    large_scale_gain: float
    small_scale_gain: float
    transmit_power: float  # W
    noise_psd: float  # W/Hz, single sided
    bandwidth: float  # Hz
    tx_duration: float  # s

    def __post_init__(self):
        for name in ("large_scale_gain", "small_scale_gain", "transmit_power",
                     "noise_psd", "bandwidth", "tx_duration"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if self.blocklength < 1:
            raise ValueError(f"blocklength tx_duration*bandwidth must be >= 1, got {self.blocklength}")

    @property
    def blocklength(self) -> float:
        return self.tx_duration * self.bandwidth


@dataclass(frozen=True)
class ReliabilityBudget:
    decoding_error: float = 1e-5
    queuing_violation: float = 1e-5

    def __post_init__(self):
        _check_prob("decoding_error", self.decoding_error, open_interval=True)
        _check_prob("queuing_violation", self.queuing_violation, open_interval=True)


@dataclass(frozen=True)
class AutonomyErrorBudget:
    task_pred_error: float
    detect_fail: float
    traj_pred_error: float

    def __post_init__(self):
        _check_prob("task_pred_error", self.task_pred_error)
        _check_prob("detect_fail", self.detect_fail)
        _check_prob("traj_pred_error", self.traj_pred_error)


@dataclass(frozen=True)
class LoadAccount:
    tele_slots: int
    total_slots: int
    bits_per_slot: float = 256.0

    def __post_init__(self):
        if self.total_slots < 1:
            raise ValueError("total_slots must be >= 1")
        if not 0 <= self.tele_slots <= self.total_slots:
            raise ValueError(f"tele_slots must lie in [0, {self.total_slots}], got {self.tele_slots}")
        if not self.bits_per_slot > 0:
            raise ValueError("bits_per_slot must be positive")

    @property
    def tele_share(self) -> float:
        return self.tele_slots / self.total_slots


def snr(cfg: ChannelConfig) -> float:
    """Received SNR, alpha * g * P / (N0 * W), linear."""
    return cfg.large_scale_gain * cfg.small_scale_gain * cfg.transmit_power / (
        cfg.noise_psd * cfg.bandwidth)


def shannon_capacity(gamma: float) -> float:
    if gamma < 0:
        raise ValueError(f"snr must be non-negative, got {gamma!r}")
    return math.log2(1.0 + gamma)


def channel_dispersion(gamma: float) -> float:
    if gamma < 0:
        raise ValueError(f"snr must be non-negative, got {gamma!r}")
    return DISPERSION_LIMIT * (1.0 - 1.0 / (1.0 + gamma) ** 2)


def q_function(x: float) -> float:
    """Gaussian tail probability P(N(0,1) > x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


# Acklam's rational approximation to the standard normal quantile
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _normal_quantile(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # one Halley step against the erfc-based CDF takes 1e-9 to machine precision
    if p < 0.5:
        e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    else:
        e = -(0.5 * math.erfc(x / math.sqrt(2.0)) - (1.0 - p))
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def q_inverse(eps: float) -> float:
    """Inverse Gaussian Q-function: the x with Q(x) = eps."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"q_inverse needs eps in (0, 1), got {eps!r}")
    if eps == 0.5:
        return 0.0
    # Q^-1(eps) = -Phi^-1(eps); evaluate on the side with the small tail
    if eps < 0.5:
        return -_normal_quantile(eps)
    return _normal_quantile(1.0 - eps)


def rate_penalty(gamma: float, blocklength: float, decoding_error: float) -> float:
    """sqrt(V / n) * Q^-1(eps), the finite-blocklength back-off from capacity."""
    return math.sqrt(channel_dispersion(gamma) / blocklength) * q_inverse(decoding_error)


def achievable_rate(cfg: ChannelConfig, decoding_error: float) -> float:
    """Normal-approximation maximal rate at blocklength tau*W, bits/s/Hz.

    Raises RateUnderflowError when the penalty reaches the capacity.
    """
    gamma = snr(cfg)
    capacity = shannon_capacity(gamma)
    rate = capacity - rate_penalty(gamma, cfg.blocklength, decoding_error)
    if rate <= 0:
        raise RateUnderflowError(
            f"no positive rate: capacity {capacity:.6g} bits/s/Hz at snr {gamma:.6g}, "
            f"blocklength {cfg.blocklength:.6g}, decoding error {decoding_error:.3g}")
    return rate


def fixed_payload_load(tele_slots: int, total_slots: int, bits_per_slot: float) -> float:
    """D = d/Z * b, bits/slot."""
    acct = LoadAccount(tele_slots, total_slots, bits_per_slot)
    return acct.tele_share * acct.bits_per_slot


def communication_load(tele_slots: int, total_slots: int, cfg: ChannelConfig,
                       decoding_error: float) -> float:
    """D = d/Z * tau*W * B with the finite-blocklength rate B, bits/slot."""
    acct = LoadAccount(tele_slots, total_slots)
    return acct.tele_share * cfg.blocklength * achievable_rate(cfg, decoding_error)


def p_tele(budget: ReliabilityBudget | None = None, rho: float = 0.85, *,
           decoding_error: float | None = None, queuing_violation: float | None = None) -> float:
    """Completion probability of a teleoperated task: (1-eq)(1-ed)rho.

    The keyword form accepts the closed endpoints 0 and 1, which the budget
    dataclass rejects.
    """
    if budget is not None:
        decoding_error = budget.decoding_error
        queuing_violation = budget.queuing_violation
    if decoding_error is None or queuing_violation is None:
        raise TypeError("pass a ReliabilityBudget or both error probabilities")
    _check_prob("decoding_error", decoding_error)
    _check_prob("queuing_violation", queuing_violation)
    _check_prob("rho", rho)
    return (1.0 - queuing_violation) * (1.0 - decoding_error) * rho


def p_auto(budget: AutonomyErrorBudget) -> float:
    """Completion probability of an autonomous task.

    A task-level error only fails the task when detection also fails.
    """
    ec, ef, et = budget.task_pred_error, budget.detect_fail, budget.traj_pred_error
    return ((1.0 - ec) + ec * (1.0 - ef)) * (1.0 - et)


def p_overall(p_t: float, p_mu: float, p_sigma: float) -> float:
    _check_prob("p_t", p_t)
    _check_prob("p_mu", p_mu)
    _check_prob("p_sigma", p_sigma)
    return p_t * p_mu + (1.0 - p_t) * p_sigma


def meets_requirement(p_o: float, psi: float) -> bool:
    _check_prob("p_o", p_o)
    _check_prob("psi", psi)
    return p_o > psi
