"""Asynchronous successive halving over resumable trainer sessions.

Trials train in rung-sized epoch chunks (the rung ladder is
grace * eta^k up to max_t, e.g. 4/8/16/32) and pause at rung boundaries.
Whenever a worker asks for a job the scheduler first tries to promote: at
rung k the candidate set is the top floor(|C|/eta) of the metrics recorded
there (ties to the lower trial id) minus already-promoted trials, and
promotions stop once floor(|C|/eta) trials have left the rung, which keeps
the number promoted out of any rung at most floor(n/eta) of its final count.
If nothing is promotable it starts a new trial until the trial budget is
spent, then reports Wait (something is still running) or Done.

get_job and report mutate the scheduler state atomically in one total order,
recorded in an append-only event log that an independent auditor can replay.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from heapq import heappop, heappush
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .learner import ALLOWED_BATCH_SIZES, TrainConfig, TrainerHandle
from .seeding import MASK64, derive_seed


class AshaError(ValueError):
    pass


class ConfigError(AshaError):
    pass


class ReportProtocolError(AshaError):
    """A metric report that violates the scheduler protocol."""


@dataclass(frozen=True)
class SearchSpace:
    """Log-uniform learning rate in [lr_min, lr_max], uniform batch size."""

    lr_min: float = 1e-6
    lr_max: float = 1e-4
    batch_sizes: tuple[int, ...] = (16, 32, 64, 128)

    def __post_init__(self):
        if not 0 < self.lr_min <= self.lr_max:
            raise ConfigError(f"need 0 < lr_min <= lr_max, got "
                              f"[{self.lr_min}, {self.lr_max}]")
        if not self.batch_sizes:
            raise ConfigError("batch size set must be non-empty")
        bad = [b for b in self.batch_sizes if b not in ALLOWED_BATCH_SIZES]
        if bad:
            raise ConfigError(f"batch sizes {bad} not in the allowed set "
                              f"{ALLOWED_BATCH_SIZES}")


@dataclass(frozen=True)
class AshaConfig:
    max_t: int = 32
    grace_period: int = 4
    reduction_factor: int = 2
    n_trials: int = 64
    workers: int = 6

    def __post_init__(self):
        if self.grace_period < 1:
            raise ConfigError("grace period must be >= 1")
        if self.reduction_factor < 2:
            raise ConfigError("reduction factor must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        rung_levels(self)  # raises if the ladder does not land on max_t
        if self.n_trials < self.reduction_factor:
            raise ConfigError(f"need at least {self.reduction_factor} trials")


def rung_levels(cfg: AshaConfig) -> list[int]:
    """Epoch budgets grace * eta^k up to and including max_t."""
    levels = []
    t = cfg.grace_period
    while t < cfg.max_t:
        levels.append(t)
        t *= cfg.reduction_factor
    if t != cfg.max_t:
        raise ConfigError(
            f"grace {cfg.grace_period} x {cfg.reduction_factor}^k never equals "
            f"max_t {cfg.max_t}; the rung ladder must land exactly on max_t")
    levels.append(t)
    return levels


def _lr_from_unit(u: float, space: SearchSpace) -> float:
    if space.lr_min == space.lr_max:
        return space.lr_min
    lo, hi = math.log(space.lr_min), math.log(space.lr_max)
    return math.exp(lo + u * (hi - lo))


def sample_trial(space: SearchSpace, seed: int) -> TrainConfig:
    """Draw one hyperparameter configuration, deterministic per seed."""
    rng = np.random.default_rng(seed & MASK64)
    lr = _lr_from_unit(float(rng.random()), space)
    sizes = sorted(space.batch_sizes)
    batch = int(sizes[int(rng.integers(len(sizes)))])
    return TrainConfig(learning_rate=lr, batch_size=batch,
                       seed=int(rng.integers(2 ** 63)))


class TrialStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    PAUSED = "paused"
    COMPLETED = "completed"
    TERMINATED = "terminated"


@dataclass
class Trial:
    id: int
    hyperparams: TrainConfig
    rung_index: int = 0
    metrics: dict[int, float] = field(default_factory=dict)
    status: TrialStatus = TrialStatus.PENDING


@dataclass
class Rung:
    level: int
    recorded: dict[int, float] = field(default_factory=dict)
    promoted: set[int] = field(default_factory=set)


@dataclass
class RungTable:
    levels: list[int]
    rungs: list[Rung]

    @classmethod
    def for_config(cls, cfg: AshaConfig) -> "RungTable":
        levels = rung_levels(cfg)
        return cls(levels=levels, rungs=[Rung(level=lv) for lv in levels])


@dataclass(frozen=True)
class SchedulerEvent:
    time: int
    kind: str  # trial_started | metric_reported | promoted | completed
    trial_id: int
    rung: int | None = None
    value: float | None = None
    config: dict | None = None

    def to_json(self) -> dict:
        out = {"time": self.time, "kind": self.kind, "trial": self.trial_id}
        if self.rung is not None:
            out["rung"] = self.rung
        if self.value is not None:
            out["value"] = self.value
        if self.config is not None:
            out["config"] = self.config
        return out


# --- jobs returned by get_job -----------------------------------------------

@dataclass(frozen=True)
class StartNew:
    trial_id: int
    config: TrainConfig
    rung: int
    epochs: int


@dataclass(frozen=True)
class Promote:
    trial_id: int
    rung: int     # target rung index
    epochs: int   # additional epochs to reach the target level


@dataclass(frozen=True)
class Wait:
    pass


@dataclass(frozen=True)
class Done:
    pass


class AshaScheduler:
    """Single logically-serialized scheduler state. Not thread-safe by itself;
    callers must serialize get_job/report (the bundled executor does)."""

    def __init__(self, space: SearchSpace, cfg: AshaConfig, seed: int = 0):
        self.space = space
        self.cfg = cfg
        self.seed = seed
        self.table = RungTable.for_config(cfg)
        self.trials: list[Trial] = []
        self.events: list[SchedulerEvent] = []
        self._clock = 0

    @property
    def levels(self) -> list[int]:
        return self.table.levels

    def _emit(self, kind: str, trial_id: int, rung: int | None = None,
              value: float | None = None, config: dict | None = None):
        self.events.append(SchedulerEvent(time=self._clock, kind=kind,
                                          trial_id=trial_id, rung=rung,
                                          value=value, config=config))
        self._clock += 1

    def _promotable(self, k: int) -> int | None:
        """Best paused trial promotable out of rung k, or None."""
        rung = self.table.rungs[k]
        n_slots = len(rung.recorded) // self.cfg.reduction_factor
        if len(rung.promoted) >= n_slots:
            return None
        ranked = sorted(rung.recorded.items(), key=lambda kv: (-kv[1], kv[0]))
        for trial_id, _ in ranked[:n_slots]:
            if trial_id in rung.promoted:
                continue
            if self.trials[trial_id].status is TrialStatus.PAUSED:
                return trial_id
        return None

    def get_job(self) -> StartNew | Promote | Wait | Done:
        """Promotion first (scanning from the second-highest rung down), then a
        new trial while budget remains, else Wait/Done."""
        for k in range(len(self.levels) - 2, -1, -1):
            trial_id = self._promotable(k)
            if trial_id is None:
                continue
            trial = self.trials[trial_id]
            self.table.rungs[k].promoted.add(trial_id)
            trial.rung_index = k + 1
            trial.status = TrialStatus.RUNNING
            self._emit("promoted", trial_id, rung=k)
            return Promote(trial_id=trial_id, rung=k + 1,
                           epochs=self.levels[k + 1] - self.levels[k])

        if len(self.trials) < self.cfg.n_trials:
            trial_id = len(self.trials)
            config = sample_trial(self.space, derive_seed(self.seed, "trial", trial_id))
            trial = Trial(id=trial_id, hyperparams=config, rung_index=0,
                          status=TrialStatus.RUNNING)
            self.trials.append(trial)
            self._emit("trial_started", trial_id, rung=0,
                       config={"learning_rate": config.learning_rate,
                               "batch_size": config.batch_size,
                               "seed": config.seed})
            return StartNew(trial_id=trial_id, config=config, rung=0,
                            epochs=self.levels[0])

        if any(t.status is TrialStatus.RUNNING for t in self.trials):
            return Wait()
        return Done()

    def report(self, trial_id: int, rung: int, metric: float) -> None:
        """Record a rung metric; pauses the trial, or completes it at the top rung."""
        if not 0 <= trial_id < len(self.trials):
            raise ReportProtocolError(f"unknown trial {trial_id}")
        trial = self.trials[trial_id]
        if trial_id in self.table.rungs[rung].recorded:
            raise ReportProtocolError(
                f"duplicate report for trial {trial_id} at rung {rung}")
        if trial.status is not TrialStatus.RUNNING or trial.rung_index != rung:
            raise ReportProtocolError(
                f"trial {trial_id} is not running at rung {rung} "
                f"(status {trial.status.value}, rung {trial.rung_index})")
        self.table.rungs[rung].recorded[trial_id] = float(metric)
        trial.metrics[rung] = float(metric)
        self._emit("metric_reported", trial_id, rung=rung, value=float(metric))
        if rung == len(self.levels) - 1:
            trial.status = TrialStatus.COMPLETED
            self._emit("completed", trial_id, rung=rung)
        else:
            trial.status = TrialStatus.PAUSED

    def best_trial(self) -> tuple[TrainConfig, int, float]:
        """(config, rung, metric) of the trial maximizing (rung, metric, -id)."""
        best = None
        for trial in self.trials:
            if not trial.metrics:
                continue
            rung = max(trial.metrics)
            key = (rung, trial.metrics[rung], -trial.id)
            if best is None or key > best[0]:
                best = (key, trial)
        if best is None:
            raise AshaError("no metrics recorded yet")
        _, trial = best
        rung = max(trial.metrics)
        return trial.hyperparams, rung, trial.metrics[rung]

    def epochs_consumed(self) -> int:
        """Sum over trials of the highest rung level reached (with a metric)."""
        total = 0
        for trial in self.trials:
            if trial.metrics:
                total += self.levels[max(trial.metrics)]
        return total


# --- executor ----------------------------------------------------------------

def run_search(scheduler: AshaScheduler,
               make_trainer: Callable[[TrainConfig, int], TrainerHandle],
               workers: int | None = None,
               duration_fn: Callable[[int, int, int], float] | None = None,
               ) -> AshaScheduler:
    """Drive the scheduler with a simulated pool of `workers` slots.

    Jobs execute serially but their reports are delivered in virtual-time
    order (duration defaults to the epoch count), reproducing the reporting
    interleavings of a real asynchronous pool deterministically. Trials pause
    at every rung boundary and resume from their checkpoint token when
    promoted.

    duration_fn(trial_id, rung, epochs) may override the virtual duration.
    """
    workers = workers if workers is not None else scheduler.cfg.workers
    if workers < 1:
        raise AshaError("need at least one worker")
    inflight: list[tuple[float, int, int, int, float]] = []  # (t, seq, trial, rung, metric)
    handles: dict[int, TrainerHandle] = {}
    tokens: dict[int, str] = {}
    now = 0.0
    seq = 0
    while True:
        job = None
        while len(inflight) < workers:
            job = scheduler.get_job()
            if isinstance(job, (Wait, Done)):
                break
            if isinstance(job, StartNew):
                handle = make_trainer(job.config, job.trial_id)
                handle.init(job.config)
                handles[job.trial_id] = handle
            else:
                handle = handles[job.trial_id]
                handle.resume(tokens[job.trial_id])
            metric = handle.train(job.epochs)
            tokens[job.trial_id] = handle.pause()
            dur = (duration_fn(job.trial_id, job.rung, job.epochs)
                   if duration_fn else float(job.epochs))
            heappush(inflight, (now + dur, seq, job.trial_id, job.rung, metric))
            seq += 1
            job = None
        if inflight:
            now, _, trial_id, rung, metric = heappop(inflight)
            scheduler.report(trial_id, rung, metric)
            continue
        if isinstance(job, Done):
            for handle in handles.values():
                handle.shutdown()
            return scheduler
        raise AshaError("scheduler waited with no trial in flight")  # pragma: no cover


# --- event log persistence and the independent promotion auditor --------------

@dataclass(frozen=True)
class AuditViolation:
    index: int
    message: str

    def __str__(self) -> str:
        return f"event #{self.index}: {self.message}"


def events_to_jsonl(scheduler: AshaScheduler) -> str:
    header = {"kind": "search_config",
              "eta": scheduler.cfg.reduction_factor,
              "levels": scheduler.levels,
              "n_trials": scheduler.cfg.n_trials,
              "seed": scheduler.seed}
    lines = [json.dumps(header)]
    lines += [json.dumps(ev.to_json()) for ev in scheduler.events]
    return "\n".join(lines) + "\n"


def write_event_log(path: str | Path, scheduler: AshaScheduler) -> None:
    Path(path).write_text(events_to_jsonl(scheduler))


def read_event_log(path: str | Path) -> tuple[dict, list[dict]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise AshaError("empty event log")
    header = json.loads(lines[0])
    if header.get("kind") != "search_config":
        raise AshaError("event log must start with a search_config record")
    return header, [json.loads(ln) for ln in lines[1:]]


def audit_events(events: Iterable[dict], eta: int) -> list[AuditViolation]:
    """Replay an event log and check every promotion against the rung rule.

    A promoted(trial, k) event is valid iff, at that point of the log, the
    trial had a metric recorded at rung k, had not been promoted from k
    before, and its metric was within the top floor(|C|/eta) of the metrics
    recorded at rung k (ties broken toward the lower trial id).

    This replayer is deliberately independent of the scheduler: it keeps its
    own per-rung records and re-derives the top slice from scratch.
    """
    recorded: dict[int, dict[int, float]] = {}
    promoted: dict[int, set[int]] = {}
    violations: list[AuditViolation] = []
    for i, ev in enumerate(events):
        kind = ev.get("kind")
        trial = ev.get("trial")
        rung = ev.get("rung")
        if kind == "metric_reported":
            bucket = recorded.setdefault(rung, {})
            if trial in bucket:
                violations.append(AuditViolation(i, f"duplicate metric for trial "
                                                    f"{trial} at rung {rung}"))
            bucket[trial] = ev.get("value")
        elif kind == "promoted":
            c = recorded.get(rung, {})
            done = promoted.setdefault(rung, set())
            if trial not in c:
                violations.append(AuditViolation(
                    i, f"trial {trial} promoted from rung {rung} before any "
                       f"metric was reported there"))
            elif trial in done:
                violations.append(AuditViolation(
                    i, f"trial {trial} promoted from rung {rung} twice"))
            else:
                n_slots = len(c) // eta
                top = sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))[:n_slots]
                if trial not in {t for t, _ in top}:
                    violations.append(AuditViolation(
                        i, f"trial {trial} promoted from rung {rung} but its metric "
                           f"{c[trial]} was not in the top {n_slots} of {len(c)} recorded"))
            done.add(trial)
    return violations


def audit_log_file(path: str | Path) -> list[AuditViolation]:
    header, events = read_event_log(path)
    return audit_events(events, eta=int(header["eta"]))
