"""Power-allocation strategies: equal power, sum-rate maximization, and the
joint satisfied-set / sum-rate optimizers (generic, ZF and RZF variants).

The joint optimizers prioritize the number of satisfied users over the sum
rate (lexicographic weighting): satisfied users are pinned at exactly their
demands and every remaining watt goes to the rest through water-filling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .feasibility import build_demand_system, check_feasible, sinr_targets
from .metrics import rates
from .precoding import Precoder, effective_gains
from .waterfill import waterfill

# Relative tolerance for demand-satisfaction membership tests; float noise on
# pinned equality constraints sits far below this.
RATE_REL_TOL = 1e-6

_PINNED_TOL = 1e-8
_PINNED_MAX_INNER = 100
_RZF_MAX_ITERS = 50


@dataclass(frozen=True)
class QoSProfile:
    """Per-user rate demands [Mbps] and RZF relaxation tolerances [Mbps]."""

    demands: np.ndarray
    tolerances: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.demands, dtype=float)
        t = np.asarray(self.tolerances, dtype=float)
        if np.any(d <= 0):
            raise ValueError("demands must be strictly positive")
        if np.any(t < 0):
            raise ValueError("tolerances must be nonnegative")
        if d.shape != t.shape:
            raise ValueError("demands and tolerances must have equal length")
        object.__setattr__(self, "demands", d)
        object.__setattr__(self, "tolerances", t)

    @classmethod
    def uniform(cls, xi_mbps: float, n_users: int, omega_frac: float = 0.02):
        d = np.full(n_users, float(xi_mbps))
        return cls(demands=d, tolerances=omega_frac * d)

    @classmethod
    def per_user(cls, demands, omega_frac: float = 0.02):
        d = np.asarray(demands, dtype=float)
        return cls(demands=d, tolerances=omega_frac * d)


@dataclass(frozen=True)
class AllocationResult:
    powers: np.ndarray
    satisfied: frozenset  # 0-based user indices meeting their demand
    rates_mbps: np.ndarray
    iterations: int
    trace: tuple  # ((|Q|, sum rate) per iterate)
    strategy: str
    congested: bool
    converged: bool = True


def satisfied_mask(rates_mbps: np.ndarray, demands: np.ndarray) -> np.ndarray:
    return rates_mbps >= demands * (1.0 - RATE_REL_TOL)


def _finish(
    H, W, cfg, qos, p, strategy, iterations, trace=None, converged=True
) -> AllocationResult:
    r = rates(H, W, p, cfg)
    mask = satisfied_mask(r, qos.demands)
    q = frozenset(int(i) for i in np.nonzero(mask)[0])
    entry = (int(mask.sum()), float(r.sum()))
    return AllocationResult(
        powers=p,
        satisfied=q,
        rates_mbps=r,
        iterations=iterations,
        trace=tuple(trace) if trace else (entry,),
        strategy=strategy,
        congested=len(q) < len(qos.demands),
        converged=converged,
    )


def equal_power(H, W: Precoder, qos: QoSProfile, cfg: SystemConfig) -> AllocationResult:
    """Baseline: P_max/K to every user, no demand awareness."""
    k = len(qos.demands)
    p = np.full(k, cfg.p_max_w / k)
    return _finish(H, W, cfg, qos, p, "equal", 0)


def sum_opt(H, W: Precoder, qos: QoSProfile, cfg: SystemConfig) -> AllocationResult:
    """Sum-rate maximization without demand constraints: water-filling on the
    interference-free rates (exact for ZF, an upper-bound heuristic for RZF;
    served rates are always re-evaluated with full interference)."""
    gains = effective_gains(H, W)
    c = cfg.noise_power_w / np.diag(gains)
    p = waterfill(c, cfg.p_max_w) if cfg.p_max_w > 0 else np.zeros_like(c)
    return _finish(H, W, cfg, qos, p, "sumopt", 0)


def _joint_zf(H, W, qos, cfg, strategy, surplus_equal):
    if W.kind != "zf":
        raise ValueError("ZF allocator requires a ZF precoder")
    k = len(qos.demands)
    p_budget = cfg.p_max_w
    c = W.raw_norms**2 * cfg.noise_power_w
    alpha = sinr_targets(qos.demands, cfg.bandwidth_mhz)
    p_min = alpha * c
    if p_min.sum() <= p_budget:
        surplus = p_budget - p_min.sum()
        if surplus_equal:
            p = p_min + surplus / k
        else:
            p = p_min + waterfill(c, surplus)
        return _finish(H, W, cfg, qos, p, strategy, 0)
    # congestion: largest ascending-cost prefix that fits the budget, ties
    # broken by user index
    order = np.argsort(p_min, kind="stable")
    prefix_cost = np.cumsum(p_min[order])
    m = int(np.searchsorted(prefix_cost, p_budget, side="right"))
    members = order[:m]
    rest = order[m:]
    p = np.zeros(k)
    p[members] = p_min[members]
    leftover = p_budget - p[members].sum()
    if rest.size:
        p[rest] = waterfill(c[rest], leftover)
    return _finish(H, W, cfg, qos, p, strategy, 0)


def joint_opt_zf(H, W: Precoder, qos: QoSProfile, cfg: SystemConfig) -> AllocationResult:
    """Closed-form joint optimizer for ZF: minimum powers p_min,k = alpha_k *
    ||w_raw_k||^2 * sigma^2; if they fit the budget everyone is served and the
    surplus is water-filled, otherwise the cheapest users are served first and
    the leftover is water-filled across the rest."""
    return _joint_zf(H, W, qos, cfg, "joint", surplus_equal=False)


def _surplus_with_demand_guard(H, W, qos, cfg, p_base, c, surplus_equal, gains, alpha_pin):
    """Top up an exact minimum-power solution with the surplus.

    Water-filling (or equal-splitting) the surplus can push a user below its
    demand through added interference.  Repair by pinning the violated users
    at their `alpha_pin` targets and water-filling the rest of the budget over
    the others, repeating while new violations appear; scaling all powers
    proportionally (which provably raises every SINR) is the last resort.
    """
    k = len(qos.demands)
    p_budget = cfg.p_max_w
    surplus = p_budget - p_base.sum()
    if surplus <= 0:
        return p_base
    p = p_base + (surplus / k if surplus_equal else waterfill(c, surplus))
    r = rates(H, W, p, cfg)
    violated = ~satisfied_mask(r, qos.demands)
    if not violated.any():
        return p
    if not surplus_equal:
        pinned = violated.copy()
        for _ in range(k):
            p_fix, ok = _solve_pinned(gains, alpha_pin, cfg.noise_power_w, pinned, p_budget, p)
            if not ok:
                break
            r_fix = rates(H, W, p_fix, cfg)
            still = ~satisfied_mask(r_fix, qos.demands)
            if not still.any():
                return p_fix
            if not (still & ~pinned).any():
                break
            pinned |= still
    return p_base * (p_budget / p_base.sum())


def _joint_rzf(H, W, qos, cfg, strategy, surplus_equal):
    if W.kind != "rzf":
        raise ValueError("RZF allocator requires an RZF precoder")
    sigma2 = cfg.noise_power_w
    p_budget = cfg.p_max_w
    gains = effective_gains(H, W)
    g_kk = np.diag(gains)
    relaxed = qos.demands + qos.tolerances
    alpha_rel = sinr_targets(relaxed, cfg.bandwidth_mhz)
    c = sigma2 / g_kk
    ds = build_demand_system(H, W, relaxed, sigma2, cfg.bandwidth_mhz)
    rep = check_feasible(ds, p_budget)
    if rep.feasible:
        # exact joint minimum powers for the relaxed demands (true rates hit
        # xi_k + omega_k, so the omega margin absorbs the surplus top-up)
        p = _surplus_with_demand_guard(
            H, W, qos, cfg, rep.min_powers, c, surplus_equal, gains, alpha_rel
        )
        return _finish(H, W, cfg, qos, p, strategy, 0)
    # congestion: grow the relaxed satisfied set, truncating each new member
    # to exactly its relaxed demand against the current interference; keep the
    # lexicographically best iterate (|Q| first, then sum rate) seen
    p = waterfill(c, p_budget)
    r = rates(H, W, p, cfg)
    in_set = satisfied_mask(r, relaxed)
    newly = in_set.copy()
    trace = [(int(in_set.sum()), float(r.sum()))]

    def score(rv):
        return (int(satisfied_mask(rv, qos.demands).sum()), float(rv.sum()))

    best_p, best_score = p.copy(), score(r)
    n = 0
    converged = True
    while newly.any():
        if n >= _RZF_MAX_ITERS:
            converged = False
            break
        n += 1
        p_prev = p.copy()
        for j in np.nonzero(newly)[0]:
            interf = gains[j] @ p_prev - gains[j, j] * p_prev[j]
            p[j] = alpha_rel[j] * (interf + sigma2) / gains[j, j]
        leftover = max(0.0, p_budget - p[in_set].sum())
        comp = ~in_set
        if not comp.any():
            break
        p[comp] = waterfill(c[comp], leftover) if leftover > 0 else 0.0
        r = rates(H, W, p, cfg)
        if score(r) > best_score:
            best_p, best_score = p.copy(), score(r)
        joiners = comp & satisfied_mask(r, relaxed)
        in_set = in_set | joiners
        newly = joiners
        trace.append((int(in_set.sum()), float(r.sum())))
    return _finish(H, W, cfg, qos, best_p, strategy, n, trace=trace, converged=converged)


def joint_opt_rzf(H, W: Precoder, qos: QoSProfile, cfg: SystemConfig) -> AllocationResult:
    """Joint optimizer for RZF on the interference-free rate upper bound, with
    relaxed demands xi_k + omega_k absorbing the neglected interference."""
    return _joint_rzf(H, W, qos, cfg, "joint", surplus_equal=False)


def _solve_pinned(gains, alpha, sigma2, pinned, p_budget, p_start):
    """Fixed point of: (i) exact-demand linear solve for the pinned users
    given complement interference, (ii) water-filling the leftover over the
    complement on interference-adjusted inverse gains (sigma^2 + I_k)/g_kk,
    with the interference taken from the previous sweep.

    For interference-free precoding (ZF) step (ii) reduces to the plain
    upper-bound water-fill.  Returns (powers, ok); ok is False when the pinned
    subsystem is infeasible (spectral radius >= 1 or budget exceeded) or the
    alternation fails to settle within the iteration cap.
    """
    g_kk = np.diag(gains)
    comp = ~pinned
    if not pinned.any():
        return waterfill(sigma2 / g_kk, p_budget), True
    s_idx = np.nonzero(pinned)[0]
    c_idx = np.nonzero(comp)[0]
    r_s = alpha[s_idx] / ((alpha[s_idx] + 1.0) * g_kk[s_idx])
    nu_s = r_s * sigma2
    q_ss = gains[np.ix_(s_idx, s_idx)]
    a = np.eye(len(s_idx)) - r_s[:, None] * q_ss
    radius = np.max(np.abs(np.linalg.eigvals(r_s[:, None] * q_ss)))
    if radius >= 1.0:
        return p_start, False
    p = p_start.copy()
    for _ in range(_PINNED_MAX_INNER):
        p_old = p.copy()
        interf_c = gains[np.ix_(s_idx, c_idx)] @ p[c_idx] if c_idx.size else 0.0
        p_s = np.linalg.solve(a, nu_s + r_s * interf_c)
        p_s = np.maximum(p_s, 0.0)
        p[s_idx] = p_s
        leftover = p_budget - p_s.sum()
        if c_idx.size:
            if leftover > 0:
                interf = gains[c_idx] @ p - g_kk[c_idx] * p[c_idx]
                p[c_idx] = waterfill((sigma2 + interf) / g_kk[c_idx], leftover)
            else:
                p[c_idx] = 0.0
        if np.max(np.abs(p - p_old)) <= _PINNED_TOL * max(1.0, p_budget):
            break
    else:
        return p, False
    if p[s_idx].sum() > p_budget * (1.0 + 1e-12):
        return p, False
    return p, True


def joint_opt_generic(
    H, W: Precoder, qos: QoSProfile, cfg: SystemConfig, *, _surplus_equal=False
) -> AllocationResult:
    """Precoder-agnostic joint optimizer.

    When the demands are jointly feasible, the minimum-power solution is
    topped up by water-filling the surplus.  Under congestion the satisfied
    set grows from the sum-rate initialization: each round pins the current
    members at exactly their demands and water-fills the rest; if no user
    crosses its demand, the cheapest affordable candidate (by pinned-system
    total power) is admitted instead, so the set keeps growing whenever the
    budget allows.  Stops when the set stalls; at most K growth rounds.
    """
    k = len(qos.demands)
    sigma2 = cfg.noise_power_w
    p_budget = cfg.p_max_w
    gains = effective_gains(H, W)
    g_kk = np.diag(gains)
    c_up = sigma2 / g_kk
    ds = build_demand_system(H, W, qos.demands, sigma2, cfg.bandwidth_mhz)
    rep = check_feasible(ds, p_budget)
    alpha = ds.alpha
    strategy = "satisset" if _surplus_equal else "joint_generic"
    if rep.feasible:
        p = _surplus_with_demand_guard(
            H, W, qos, cfg, rep.min_powers, c_up, _surplus_equal, gains, alpha
        )
        return _finish(H, W, cfg, qos, p, strategy, 0)
    # congestion: sum-rate initialization, then monotone set growth
    p = waterfill(c_up, p_budget)
    r = rates(H, W, p, cfg)
    mask = satisfied_mask(r, qos.demands)
    trace = [(int(mask.sum()), float(r.sum()))]
    converged = True
    n = 0
    while n <= k:
        n += 1
        p_new, ok = _solve_pinned(gains, alpha, sigma2, mask, p_budget, p)
        if not ok:
            converged = False
            break
        r_new = rates(H, W, p_new, cfg)
        mask_new = satisfied_mask(r_new, qos.demands)
        if mask_new.sum() <= mask.sum():
            # rate crossings stalled; admit the cheapest affordable candidate
            best = None
            best_total = np.inf
            for j in np.nonzero(~mask)[0]:
                trial_mask = mask.copy()
                trial_mask[j] = True
                p_j, ok_j = _solve_pinned(gains, alpha, sigma2, trial_mask, p_budget, p_new)
                if not ok_j:
                    continue
                total_j = p_j[trial_mask].sum()
                if total_j <= p_budget * (1.0 + 1e-12) and total_j < best_total:
                    best_total = total_j
                    best = p_j
            if best is None:
                p, r, mask = p_new, r_new, mask_new | mask
                trace.append((int(mask.sum()), float(r.sum())))
                break
            p_new = best
            r_new = rates(H, W, p_new, cfg)
            mask_new = satisfied_mask(r_new, qos.demands)
        p, r, mask = p_new, r_new, mask_new
        trace.append((int(mask.sum()), float(r.sum())))
        if mask.all():
            break
    return _finish(H, W, cfg, qos, p, strategy, n, trace=trace, converged=converged)


def satis_set_opt(H, W: Precoder, qos: QoSProfile, cfg: SystemConfig) -> AllocationResult:
    """Satisfied-set maximization only: same set growth as the matching joint
    optimizer, but a feasible instance splits the surplus equally across
    users instead of water-filling it."""
    if W.kind == "zf":
        return _joint_zf(H, W, qos, cfg, "satisset", surplus_equal=True)
    if W.kind == "rzf":
        return _joint_rzf(H, W, qos, cfg, "satisset", surplus_equal=True)
    return joint_opt_generic(H, W, qos, cfg, _surplus_equal=True)


def joint_opt(H, W: Precoder, qos: QoSProfile, cfg: SystemConfig) -> AllocationResult:
    """Dispatch the joint optimizer matching the precoder kind."""
    if W.kind == "zf":
        return joint_opt_zf(H, W, qos, cfg)
    if W.kind == "rzf":
        return joint_opt_rzf(H, W, qos, cfg)
    return joint_opt_generic(H, W, qos, cfg)
