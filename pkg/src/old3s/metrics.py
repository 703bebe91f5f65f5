"""Prequential metrics: windowed online accuracy, averaged cumulative regret,
multi-seed aggregation, and CSV/JSON emission."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .nn import ContractViolation


class MetricsLog:
    """Per-round record of one run: correctness, loss, trailing accuracy, the
    ensemble coefficient, and the hedge weights."""

    COLUMNS = ("t", "phase", "correct", "loss", "oca", "p")

    def __init__(self, depth, seed=None, config=None):
        self.depth = int(depth)
        self.seed = seed
        self.config = config
        self.t = []
        self.phase = []
        self.correct = []
        self.loss = []
        self.oca = []
        self.p = []
        self.alphas = []

    def __len__(self):
        return len(self.t)

    def append(self, t, phase, correct, loss, oca, p, alphas):
        alphas = list(alphas)
        if len(alphas) != self.depth:
            raise ContractViolation("alpha count != declared depth")
        self.t.append(int(t))
        self.phase.append(phase)
        self.correct.append(int(correct))
        self.loss.append(float(loss))
        self.oca.append(float(oca))
        self.p.append(float(p))
        self.alphas.append([float(a) for a in alphas])

    def header(self):
        return list(self.COLUMNS) + [f"alpha_{i + 1}" for i in range(self.depth)]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for i in range(len(self.t)):
                writer.writerow(
                    [
                        self.t[i],
                        self.phase[i],
                        self.correct[i],
                        repr(self.loss[i]),
                        repr(self.oca[i]),
                        repr(self.p[i]),
                    ]
                    + [repr(a) for a in self.alphas[i]]
                )

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            depth = len(header) - len(cls.COLUMNS)
            if depth < 1 or header != list(cls.COLUMNS) + [
                f"alpha_{i + 1}" for i in range(depth)
            ]:
                raise ContractViolation(f"{path}: unexpected metrics header")
            log = cls(depth)
            for row in reader:
                log.append(
                    int(row[0]),
                    row[1],
                    int(row[2]),
                    float(row[3]),
                    float(row[4]),
                    float(row[5]),
                    [float(v) for v in row[6:]],
                )
        return log

    def oca_series(self):
        return np.asarray(self.oca, dtype=np.float64)


def oca(log, t, window):
    """Fraction of correct predictions over the most recent min(window, t)
    rounds ending at t (1-based). Brute-force recount from the raw
    correctness column."""
    if len(log) == 0:
        raise ContractViolation("empty metrics log")
    if not 1 <= t <= len(log):
        raise ContractViolation(f"round {t} outside log")
    lo = max(0, t - window)
    chunk = log.correct[lo:t]
    return sum(chunk) / len(chunk)


def acr(oca_series, hindsight):
    """Mean over all rounds of (hindsight - oca_t).

    Uses exact summation, so the result is invariant under permutations of
    the series. Rounds where the learner beats the hindsight value contribute
    negative terms and are kept as-is.
    """
    series = list(oca_series)
    if not series:
        raise ContractViolation("empty series")
    if hindsight < 0:
        raise ContractViolation("hindsight must be >= 0")
    return math.fsum(hindsight - v for v in series) / len(series)


def boundary_drop(log, schedule):
    """Mean trailing accuracy over one window right after the overlap phase
    ends minus the mean right before; negative means performance dropped."""
    B = schedule.window
    boundary = schedule.tb_end
    before = log.oca[max(0, boundary - B) : boundary]
    after = log.oca[boundary : boundary + B]
    if not before or not after:
        raise ContractViolation("windows around the boundary are empty")
    return (math.fsum(after) / len(after)) - (math.fsum(before) / len(before))


@dataclass
class RunSummary:
    """Per-run scalars plus the provenance needed to aggregate and audit."""

    variant: str
    seed: int
    acr: float
    mean_oca: float
    final_oca: float
    hindsight: float
    n_rounds: int
    runtime_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


def mean_and_variance(values):
    """(sample mean, sample variance); variance is 0 for a single value."""
    vals = [float(v) for v in values]
    if not vals:
        raise ContractViolation("no values to aggregate")
    m = math.fsum(vals) / len(vals)
    if len(vals) == 1:
        return m, 0.0
    var = math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1)
    return m, var


def summarize(runs):
    """Aggregate RunSummary objects across seeds: sample mean and sample
    variance per metric."""
    if not runs:
        raise ContractViolation("no runs to summarize")
    return {
        "acr": mean_and_variance([r.acr for r in runs]),
        "mean_oca": mean_and_variance([r.mean_oca for r in runs]),
        "final_oca": mean_and_variance([r.final_oca for r in runs]),
    }


def summarize_run(log, hindsight, variant, seed, runtime_seconds=0.0, config=None):
    """Fold one MetricsLog into a RunSummary against a hindsight anchor."""
    series = log.oca_series()
    return RunSummary(
        variant=variant,
        seed=int(seed) if seed is not None else -1,
        acr=acr(series, hindsight),
        mean_oca=math.fsum(log.oca) / len(log.oca),
        final_oca=log.oca[-1],
        hindsight=float(hindsight),
        n_rounds=len(log),
        runtime_seconds=float(runtime_seconds),
        config=dict(config or {}),
    )
