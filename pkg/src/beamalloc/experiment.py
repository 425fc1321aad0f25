"""Campaign harness: flat-file config, Monte-Carlo runs, dataset generation,
surrogate training and the model-vs-surrogate evaluation table.

Config files are flat `key = value` lines with dotted section prefixes
(`system.n_beams = 7`); see README for the full key list.  Per-trial seeds
are `base_seed + trial_index`, so any single trial can be replayed.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import allocators, metrics, surrogate
from .channel import ChannelMatrix, UserDrop, apply_atmosphere, build_channel, drop_users
from .config import InvalidConfigError, SystemConfig
from .precoding import Precoder, make_rzf, make_zf

_REDRAW_STRIDE = 2654435761  # seed offset per conditioning redraw
_MAX_REDRAWS = 64

KNOWN_STRATEGIES = ("equal", "sumopt", "satisset", "joint")
KNOWN_PRECODERS = ("zf", "rzf")

PER_TRIAL_COLUMNS = (
    "trial,seed,precoder,strategy,xi_mbps,sum_rate_mbps,"
    "n_satisfied,congested,jain,lambda_obj,runtime_ms"
)
AGGREGATE_COLUMNS = (
    "precoder,strategy,xi_mbps,n_trials,congestion_prob,satisfaction_prob,"
    "mean_sum_rate_mbps,mean_sum_rate_satisfied_mbps,mean_sum_rate_unsatisfied_mbps,"
    "mean_jain,mean_lambda"
)
EVAL_COLUMNS = "method,qos,time_ms,sum_rate,satisfaction_pct"


class ConfigError(InvalidConfigError):
    """Configuration file problem, with a file:line prefix where possible."""


@dataclass
class SurrogateSection:
    n_train: int = 5000
    n_test: int = 1000
    xi_mbps: float = 250.0
    dataset_path: str = "dataset.jsonl"
    model_dir: str = "."
    hidden: tuple = (128, 64)
    batch_size: int = 256
    learning_rate: float = 1e-3
    epochs: int = 200
    patience: int = 10
    val_fraction: float = 0.1
    seed: int = 0


@dataclass
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    qos_sweep: tuple = (200.0, 400.0, 600.0, 800.0, 1000.0, 1200.0)
    qos_per_user: tuple | None = None
    omega_frac: float = 0.02
    strategies: tuple = KNOWN_STRATEGIES
    precoders: tuple = KNOWN_PRECODERS
    n_trials: int = 200
    base_seed: int = 1
    out_dir: str = "out"
    record_timing: bool = False
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)

    def validate(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if not self.precoders:
            raise ConfigError("at least one precoder is required")
        for s in self.strategies:
            if s not in KNOWN_STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        for p in self.precoders:
            if p not in KNOWN_PRECODERS:
                raise ConfigError(f"unknown precoder {p!r}")
        if not self.qos_sweep and self.qos_per_user is None:
            raise ConfigError("qos.sweep or qos.per_user must be set")


def _parse_scalar(text: str):
    t = text.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def _parse_value(text: str):
    if "," in text:
        return tuple(_parse_scalar(part) for part in text.split(",") if part.strip())
    return _parse_scalar(text)


_SYSTEM_KEYS = {f.name: f.name for f in fields(SystemConfig)}
_SYSTEM_KEYS["atmospherics"] = "atmospherics_enabled"
_SURROGATE_KEYS = {f.name for f in fields(SurrogateSection)}


def parse_config(path: str) -> ExperimentConfig:
    """Parse a flat dotted-key config file with line-precise errors."""
    system_kwargs = {}
    surr = SurrogateSection()
    cfg = ExperimentConfig()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    with fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            val = _parse_value(value)
            where = f"{path}:{line_no}"
            try:
                _apply_key(cfg, system_kwargs, surr, key, val, where)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}: invalid value for {key!r}: {exc}") from exc
    try:
        cfg.system = SystemConfig(**system_kwargs)
    except InvalidConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg.surrogate = surr
    cfg.validate()
    return cfg


def _as_tuple(val):
    return val if isinstance(val, tuple) else (val,)


def _apply_key(cfg, system_kwargs, surr, key, val, where):
    if key.startswith("system."):
        name = key[len("system.") :]
        if name not in _SYSTEM_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        system_kwargs[_SYSTEM_KEYS[name]] = val
    elif key == "qos.sweep":
        cfg.qos_sweep = tuple(float(v) for v in _as_tuple(val))
    elif key == "qos.per_user":
        cfg.qos_per_user = tuple(float(v) for v in _as_tuple(val))
    elif key == "qos.omega_frac":
        cfg.omega_frac = float(val)
    elif key == "strategies":
        cfg.strategies = tuple(str(v) for v in _as_tuple(val))
    elif key == "precoders":
        cfg.precoders = tuple(str(v) for v in _as_tuple(val))
    elif key == "n_trials":
        cfg.n_trials = int(val)
    elif key == "base_seed":
        cfg.base_seed = int(val)
    elif key == "output.dir":
        cfg.out_dir = str(val)
    elif key == "output.record_timing":
        cfg.record_timing = bool(val)
    elif key.startswith("surrogate."):
        name = key[len("surrogate.") :]
        if name not in _SURROGATE_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if name == "hidden":
            setattr(surr, name, tuple(int(v) for v in _as_tuple(val)))
        else:
            setattr(surr, name, type(getattr(surr, name))(val))
    else:
        raise ConfigError(f"{where}: unknown key {key!r}")


# ---------------------------------------------------------------------------
# trial generation

@dataclass(frozen=True)
class Trial:
    seed: int
    drop: UserDrop
    channel: ChannelMatrix
    atmosphere: object | None
    redraws: int


def make_trial(system: SystemConfig, seed: int) -> Trial:
    """Drop users and build the channel, redrawing deterministically when the
    channel is too ill-conditioned for zero forcing (same Gram-matrix test as
    the ZF precoder, so both precoders always see the same channels)."""
    for attempt in range(_MAX_REDRAWS):
        eff_seed = seed + attempt * _REDRAW_STRIDE
        drop = drop_users(system, eff_seed)
        chan = build_channel(drop, system, eff_seed)
        atmos = None
        if system.atmospherics_enabled:
            chan, atmos = apply_atmosphere(chan, drop, system, eff_seed)
        gram = chan.H.conj().T @ chan.H
        if np.linalg.cond(gram) <= system.cond_cap:
            return Trial(seed=seed, drop=drop, channel=chan, atmosphere=atmos, redraws=attempt)
    raise RuntimeError(f"no well-conditioned drop after {_MAX_REDRAWS} redraws (seed {seed})")


def build_precoder(trial: Trial, system: SystemConfig, kind: str) -> Precoder:
    if kind == "zf":
        return make_zf(trial.channel, cond_cap=system.cond_cap)
    if kind == "rzf":
        return make_rzf(trial.channel, system.noise_power_w, system.p_max_w)
    raise ConfigError(f"unknown precoder {kind!r}")


# ---------------------------------------------------------------------------
# campaign

def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def _allocate(strategy, H, W, qos, system):
    if strategy == "equal":
        return allocators.equal_power(H, W, qos, system)
    if strategy == "sumopt":
        return allocators.sum_opt(H, W, qos, system)
    if strategy == "satisset":
        return allocators.satis_set_opt(H, W, qos, system)
    if strategy == "joint":
        return allocators.joint_opt(H, W, qos, system)
    raise ConfigError(f"unknown strategy {strategy!r}")


def run_campaign(cfg: ExperimentConfig) -> dict:
    """Full Monte-Carlo sweep; writes the per-trial and aggregated CSVs and
    returns their paths plus the in-memory records."""
    cfg.validate()
    system = cfg.system
    os.makedirs(cfg.out_dir, exist_ok=True)
    demand_points = [("uniform", xi) for xi in cfg.qos_sweep]
    if cfg.qos_per_user is not None:
        demand_points.append(("per_user", cfg.qos_per_user))
    records: list[metrics.TrialRecord] = []
    k = system.n_users
    for t in range(cfg.n_trials):
        seed = cfg.base_seed + t
        trial = make_trial(system, seed)
        for pk in cfg.precoders:
            W = build_precoder(trial, system, pk)
            ref_qos = allocators.QoSProfile.uniform(1.0, k, cfg.omega_frac)
            t0 = time.perf_counter()
            sumopt_res = allocators.sum_opt(trial.channel, W, ref_qos, system)
            sumopt_ms = (time.perf_counter() - t0) * 1e3
            for kind, point in demand_points:
                if kind == "uniform":
                    qos = allocators.QoSProfile.uniform(point, k, cfg.omega_frac)
                else:
                    qos = allocators.QoSProfile.per_user(point, cfg.omega_frac)
                for strategy in cfg.strategies:
                    if strategy == "sumopt":
                        # allocation is demand-independent; reuse the solve
                        sat_set = frozenset(
                            int(i)
                            for i in np.nonzero(
                                allocators.satisfied_mask(sumopt_res.rates_mbps, qos.demands)
                            )[0]
                        )
                        res = allocators.AllocationResult(
                            powers=sumopt_res.powers,
                            satisfied=sat_set,
                            rates_mbps=sumopt_res.rates_mbps,
                            iterations=0,
                            trace=((len(sat_set), float(sumopt_res.rates_mbps.sum())),),
                            strategy="sumopt",
                            congested=len(sat_set) < k,
                            converged=True,
                        )
                        elapsed_ms = sumopt_ms
                    else:
                        t0 = time.perf_counter()
                        res = _allocate(strategy, trial.channel, W, qos, system)
                        elapsed_ms = (time.perf_counter() - t0) * 1e3
                    sat = sorted(res.satisfied)
                    unsat = [i for i in range(k) if i not in res.satisfied]
                    records.append(
                        metrics.TrialRecord(
                            trial=t,
                            seed=seed,
                            precoder=pk,
                            strategy=strategy,
                            xi_mbps=float(np.mean(qos.demands)),
                            sum_rate_mbps=float(res.rates_mbps.sum()),
                            sum_rate_satisfied_mbps=float(res.rates_mbps[sat].sum()),
                            sum_rate_unsatisfied_mbps=float(res.rates_mbps[unsat].sum()),
                            n_satisfied=len(res.satisfied),
                            n_users=k,
                            congested=res.congested,
                            jain=metrics.jain(res.rates_mbps / qos.demands),
                            lambda_obj=metrics.lambda_objective(res, sumopt_res.rates_mbps),
                            runtime_ms=elapsed_ms if cfg.record_timing else 0.0,
                        )
                    )
    per_trial_path = os.path.join(cfg.out_dir, "per_trial.csv")
    agg_path = os.path.join(cfg.out_dir, "aggregate.csv")
    _write_per_trial(per_trial_path, records)
    _write_aggregate(agg_path, records)
    return {"per_trial": per_trial_path, "aggregate": agg_path, "records": records}


def _write_per_trial(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PER_TRIAL_COLUMNS + "\n")
        for r in records:
            fh.write(
                ",".join(
                    (
                        str(r.trial),
                        str(r.seed),
                        r.precoder,
                        r.strategy,
                        _fmt(r.xi_mbps),
                        _fmt(r.sum_rate_mbps),
                        str(r.n_satisfied),
                        _fmt(r.congested),
                        _fmt(r.jain),
                        _fmt(r.lambda_obj),
                        _fmt(r.runtime_ms),
                    )
                )
                + "\n"
            )


def group_records(records):
    """(precoder, strategy, xi) -> MetricsSummary over the matching trials."""
    cells = {}
    for r in records:
        cells.setdefault((r.precoder, r.strategy, r.xi_mbps), []).append(r)
    return {key: metrics.aggregate(rs) for key, rs in cells.items()}


def _write_aggregate(path, records):
    groups = group_records(records)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(AGGREGATE_COLUMNS + "\n")
        for (pk, strategy, xi) in sorted(groups, key=lambda c: (c[0], c[1], c[2])):
            s = groups[(pk, strategy, xi)]
            fh.write(
                ",".join(
                    (
                        pk,
                        strategy,
                        _fmt(xi),
                        str(s.n_trials),
                        _fmt(s.congestion_prob),
                        _fmt(s.satisfaction_prob),
                        _fmt(s.mean_sum_rate),
                        _fmt(s.mean_sum_rate_satisfied),
                        _fmt(s.mean_sum_rate_unsatisfied),
                        _fmt(s.jain_index),
                        _fmt(s.lambda_obj),
                    )
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# surrogate dataset / training / evaluation

def _label_strategy(pk: str) -> str:
    return f"joint_{pk}"


def gen_dataset(cfg: ExperimentConfig) -> str:
    """Label (gain vector -> joint-optimizer powers) pairs, one trial per
    seed, for every configured precoder."""
    cfg.validate()
    system = cfg.system
    surr = cfg.surrogate
    n_total = surr.n_train + surr.n_test
    k = system.n_users
    records = []
    for i in range(n_total):
        seed = cfg.base_seed + i
        trial = make_trial(system, seed)
        qos = allocators.QoSProfile.uniform(surr.xi_mbps, k, cfg.omega_frac)
        for pk in cfg.precoders:
            W = build_precoder(trial, system, pk)
            res = allocators.joint_opt(trial.channel, W, qos, system)
            records.append(
                surrogate.DatasetRecord(
                    x=surrogate.gains_vector(trial.channel),
                    p_star=res.powers,
                    seed=seed,
                    strategy=_label_strategy(pk),
                    xi=qos.demands,
                )
            )
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, surr.dataset_path)
    surrogate.save_dataset(records, path)
    return path


def train_models(cfg: ExperimentConfig) -> dict:
    """Train one surrogate per label strategy present in the dataset; returns
    {strategy: (model_path, report)}."""
    surr = cfg.surrogate
    path = os.path.join(cfg.out_dir, surr.dataset_path)
    records = surrogate.load_dataset(path)
    if not records:
        raise ConfigError(f"{path}: dataset is empty")
    tcfg = surrogate.TrainingConfig(
        hidden=surr.hidden,
        batch_size=surr.batch_size,
        learning_rate=surr.learning_rate,
        max_epochs=surr.epochs,
        patience=surr.patience,
        val_fraction=surr.val_fraction,
        seed=surr.seed,
    )
    out = {}
    os.makedirs(os.path.join(cfg.out_dir, surr.model_dir), exist_ok=True)
    for strategy in sorted({r.strategy for r in records}):
        group = [r for r in records if r.strategy == strategy]
        train_split = group[: surr.n_train]
        model, report = surrogate.train(train_split, tcfg)
        model_path = os.path.normpath(
            os.path.join(cfg.out_dir, surr.model_dir, f"model_{strategy}.json")
        )
        surrogate.save_model(model, model_path)
        out[strategy] = (model_path, report)
    return out


def eval_model(cfg: ExperimentConfig, model_path: str) -> str:
    """Replay the test-split trials, compare the model-based solver with the
    surrogate (rates, satisfaction, per-sample latency) and write the eval CSV."""
    model = surrogate.load_model(model_path)
    strategy = model.strategy
    if not strategy.startswith("joint_"):
        raise ConfigError(f"{model_path}: unknown label strategy {strategy!r}")
    pk = strategy.split("_", 1)[1]
    system = cfg.system
    surr = cfg.surrogate
    records = surrogate.load_dataset(os.path.join(cfg.out_dir, surr.dataset_path))
    group = [r for r in records if r.strategy == strategy]
    test_split = group[surr.n_train : surr.n_train + surr.n_test]
    if not test_split:
        raise ConfigError("dataset has no test split for this model")
    k = system.n_users
    qos = allocators.QoSProfile.uniform(surr.xi_mbps, k, cfg.omega_frac)

    model_ms = 0.0
    model_rates = []
    model_sat = 0
    surro_rates = []
    surro_sat = 0
    trials = []
    for rec in test_split:
        trial = make_trial(system, rec.seed)
        W = build_precoder(trial, system, pk)
        trials.append((trial, W))
        t0 = time.perf_counter()
        res = allocators.joint_opt(trial.channel, W, qos, system)
        model_ms += (time.perf_counter() - t0) * 1e3
        model_rates.append(res.rates_mbps.sum())
        model_sat += len(res.satisfied)
    gains = np.stack([rec.x for rec in test_split])
    t0 = time.perf_counter()
    powers = surrogate.predict_powers(model, gains, system.p_max_w)
    surro_ms_total = (time.perf_counter() - t0) * 1e3
    for (trial, W), p in zip(trials, powers):
        r = metrics.rates(trial.channel, W, p, system)
        surro_rates.append(r.sum())
        surro_sat += int(allocators.satisfied_mask(r, qos.demands).sum())

    n = len(test_split)
    rows = [
        (
            f"model_{pk}",
            surr.xi_mbps,
            model_ms / n,
            float(np.mean(model_rates)),
            100.0 * model_sat / (n * k),
        ),
        (
            f"surrogate_{pk}",
            surr.xi_mbps,
            surro_ms_total / n,
            float(np.mean(surro_rates)),
            100.0 * surro_sat / (n * k),
        ),
    ]
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"eval_{pk}.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(EVAL_COLUMNS + "\n")
        for method, q, ms, sr, sp in rows:
            fh.write(f"{method},{_fmt(float(q))},{_fmt(ms)},{_fmt(sr)},{_fmt(sp)}\n")
    return path


def train_and_eval(cfg: ExperimentConfig) -> dict:
    """Dataset -> trained model(s) -> eval CSV(s)."""
    trained = train_models(cfg)
    out = {}
    for strategy, (model_path, report) in trained.items():
        out[strategy] = {
            "model": model_path,
            "eval": eval_model(cfg, model_path),
            "report": report,
        }
    return out
