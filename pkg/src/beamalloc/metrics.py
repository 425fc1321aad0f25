"""Rates, fairness and campaign-level evaluation quantities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .precoding import Precoder, effective_gains


def sinr(H, precoder: Precoder, powers: np.ndarray, noise_power: float) -> np.ndarray:
    """Per-user SINR with full mutual interference."""
    p = np.asarray(powers, dtype=float)
    gains = effective_gains(H, precoder)
    signal = p * np.diag(gains)
    interference = gains @ p - signal
    return signal / (interference + noise_power)


def rates(H, precoder: Precoder, powers: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Served rate B*log2(1 + SINR) in Mbps (B in MHz)."""
    g = sinr(H, precoder, powers, cfg.noise_power_w)
    return cfg.bandwidth_mhz * np.log2(1.0 + g)


def jain(satisfaction_ratios: np.ndarray) -> float:
    """Jain's fairness index (sum o)^2 / (K sum o^2) over ratios o_k >= 0."""
    o = np.asarray(satisfaction_ratios, dtype=float)
    if np.any(o < 0):
        raise ValueError("satisfaction ratios must be nonnegative")
    s2 = float(np.sum(o**2))
    if s2 == 0.0:
        raise ValueError("Jain's index undefined for all-zero ratios")
    return float(np.sum(o)) ** 2 / (o.size * s2)


def lambda_objective(result, sumopt_rates_mbps: np.ndarray) -> float:
    """Normalized joint objective against a paired sum-rate-optimal run:
    Lambda = Omega*(|Q|/K + sum(R)/S), Omega = K*S/(K+S), S = sum-opt rate."""
    s = float(np.sum(sumopt_rates_mbps))
    if s <= 0:
        raise ValueError("sum-rate reference is zero; objective undefined")
    k = len(result.rates_mbps)
    omega = k * s / (k + s)
    return omega * (len(result.satisfied) / k + float(np.sum(result.rates_mbps)) / s)


@dataclass(frozen=True)
class TrialRecord:
    """One (trial, precoder, strategy, demand) cell of a campaign."""

    trial: int
    seed: int
    precoder: str
    strategy: str
    xi_mbps: float
    sum_rate_mbps: float
    sum_rate_satisfied_mbps: float
    sum_rate_unsatisfied_mbps: float
    n_satisfied: int
    n_users: int
    congested: bool
    jain: float
    lambda_obj: float
    runtime_ms: float = 0.0


@dataclass(frozen=True)
class MetricsSummary:
    congestion_prob: float
    satisfaction_prob: float
    mean_sum_rate: float
    mean_sum_rate_satisfied: float
    mean_sum_rate_unsatisfied: float
    jain_index: float
    lambda_obj: float
    n_trials: int
    records: tuple = field(repr=False, default=())


def aggregate(records: list[TrialRecord]) -> MetricsSummary:
    """Sample means over a homogeneous set of trial records."""
    if not records:
        raise ValueError("cannot aggregate an empty trial list")
    n = len(records)
    return MetricsSummary(
        congestion_prob=sum(r.congested for r in records) / n,
        satisfaction_prob=sum(r.n_satisfied / r.n_users for r in records) / n,
        mean_sum_rate=sum(r.sum_rate_mbps for r in records) / n,
        mean_sum_rate_satisfied=sum(r.sum_rate_satisfied_mbps for r in records) / n,
        mean_sum_rate_unsatisfied=sum(r.sum_rate_unsatisfied_mbps for r in records) / n,
        jain_index=sum(r.jain for r in records) / n,
        lambda_obj=sum(r.lambda_obj for r in records) / n,
        n_trials=n,
        records=tuple(records),
    )
