"""Tabular ingestion and doubly-streaming synthesis.

A run streams one labeled instance per round through three phases: first only
the original feature space is visible, then both spaces overlap briefly, then
only the evolved space remains. The evolved space is synthesized as a fixed
random projection of the original features squashed through a sigmoid.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .nn import ContractViolation, RngState, derive_seed, require_vector, sigmoid

PHASES = ("T1", "Tb", "T2")

VARIANCE_FLOOR = 1e-8


@dataclass
class PhaseSchedule:
    """Round spans: T1 = [1, t1_end], Tb = (t1_end, tb_end], T2 = (tb_end, n_total].

    window is the trailing-accuracy window size used by the metrics.
    """

    n_total: int
    t1_end: int
    tb_end: int
    window: int

    def __post_init__(self):
        if not (1 <= self.t1_end < self.tb_end < self.n_total):
            raise ContractViolation(
                f"invalid spans: 1 <= {self.t1_end} < {self.tb_end} < {self.n_total} required"
            )
        if self.window < 1:
            raise ContractViolation("window must be >= 1")
        overlap = self.tb_end - self.t1_end
        shortest = min(self.t1_end, self.n_total - self.tb_end)
        if overlap >= shortest:
            raise ContractViolation(
                f"overlap span {overlap} dominates the shorter phase span {shortest}"
            )
        if overlap > 0.25 * shortest:
            warnings.warn(
                f"overlap span {overlap} exceeds 25% of the shorter phase span {shortest}",
                stacklevel=2,
            )

    def phase_of(self, t):
        if t <= self.t1_end:
            return "T1"
        if t <= self.tb_end:
            return "Tb"
        return "T2"

    @property
    def spans(self):
        return self.t1_end, self.tb_end - self.t1_end, self.n_total - self.tb_end


def make_schedule(n_total, fractions=(0.45, 0.10, 0.45), window=None):
    """Build a PhaseSchedule from phase fractions of the stream length."""
    f1, fb, f2 = fractions
    if min(f1, fb, f2) <= 0 or abs(f1 + fb + f2 - 1.0) > 1e-9:
        raise ContractViolation("fractions must be positive and sum to 1")
    t1_end = round(f1 * n_total)
    tb_end = round((f1 + fb) * n_total)
    if window is None:
        window = min(1000, max(1, n_total // 10))
    return PhaseSchedule(n_total, t1_end, tb_end, window)


@dataclass
class Instance:
    """One stream arrival; field presence is dictated by the phase."""

    t: int
    phase: str
    y: int
    x_s1: np.ndarray | None = None
    x_s2: np.ndarray | None = None

    def __post_init__(self):
        want_s1 = self.phase in ("T1", "Tb")
        want_s2 = self.phase in ("Tb", "T2")
        if self.phase not in PHASES:
            raise ContractViolation(f"unknown phase {self.phase!r}")
        if (self.x_s1 is not None) != want_s1 or (self.x_s2 is not None) != want_s2:
            raise ContractViolation(
                f"field presence does not match phase {self.phase} at round {self.t}"
            )


@dataclass
class EvolutionMap:
    """Fixed random projection defining the evolved feature space."""

    W: np.ndarray
    seed: int

    @classmethod
    def generate(cls, d1, d2, seed):
        rng = RngState(seed)
        return cls(rng.standard_normal((d1, d2)), seed)


def evolve_features(x_s1, emap):
    """x_s2_j = sigmoid(sum_i W_ij x_s1_i); every entry lands in (0, 1)."""
    x_s1 = require_vector(x_s1, emap.W.shape[0], "evolve_features input")
    return sigmoid(emap.W.T @ x_s1)


def load_csv(path, label_column):
    """Parse a headered CSV into (features, integer labels).

    Features must be numeric. Labels that already form 0..C-1 are kept as-is;
    anything else is mapped through its sorted unique values. Rows keep file
    order.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ContractViolation(f"{path}: empty file")
            if label_column not in header:
                raise ContractViolation(f"{path}: no column named {label_column!r}")
            label_idx = header.index(label_column)
            feats = []
            labels = []
            for row_no, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise ContractViolation(f"{path}:{row_no}: wrong field count")
                try:
                    feats.append(
                        [float(v) for i, v in enumerate(row) if i != label_idx]
                    )
                except ValueError as exc:
                    raise ContractViolation(f"{path}:{row_no}: non-numeric cell ({exc})")
                labels.append(row[label_idx])
    except OSError as exc:
        raise ContractViolation(f"cannot read {path}: {exc}")
    if not feats:
        raise ContractViolation(f"{path}: no data rows")
    X = np.asarray(feats, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ContractViolation(f"{path}: non-finite feature values")
    y = _map_labels(labels)
    return X, y


def _map_labels(labels):
    try:
        ints = [int(v) for v in labels]
        uniq = sorted(set(ints))
        if uniq == list(range(len(uniq))):
            return np.asarray(ints, dtype=np.int64)
    except ValueError:
        pass
    uniq = sorted(set(labels))
    lookup = {v: i for i, v in enumerate(uniq)}
    return np.asarray([lookup[v] for v in labels], dtype=np.int64)


def normalize_features(X, stat_rows):
    """Z-score every column using statistics from the first stat_rows rows
    only, so nothing later in the stream leaks into preprocessing. Variance is
    floored at 1e-8 (constant columns normalize to zero)."""
    if not 1 <= stat_rows <= X.shape[0]:
        raise ContractViolation("stat_rows outside dataset")
    head = X[:stat_rows]
    mean = head.mean(axis=0)
    var = np.maximum(head.var(axis=0), VARIANCE_FLOOR)
    return (X - mean) / np.sqrt(var), mean, var


class DoublyStream:
    """Single-consumer iterator over a doubly-streaming run.

    Rows are optionally shuffled once with the run seed, normalized with
    statistics from the first-phase span, and the evolved features are
    produced per round from the fixed projection. The underlying arrays stay
    reachable (X1n, labels, emap) so evaluation harnesses can pair true
    first-space vectors with evolved ones on held-out rounds.
    """

    def __init__(self, X, y, schedule, d2, seed, shuffle=True):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ContractViolation("feature matrix and labels disagree")
        if X.shape[0] != schedule.n_total:
            raise ContractViolation(
                f"dataset has {X.shape[0]} rows but schedule expects {schedule.n_total}"
            )
        self.schedule = schedule
        self.seed = int(seed)
        if shuffle:
            order = RngState(derive_seed(seed, 101)).permutation(X.shape[0])
            X, y = X[order], y[order]
        self.X1n, self.mean, self.var = normalize_features(X, schedule.t1_end)
        self.labels = y
        self.n_classes = int(y.max()) + 1
        self.d1 = X.shape[1]
        self.d2 = int(d2)
        self.emap = EvolutionMap.generate(self.d1, self.d2, derive_seed(seed, 202))

    def true_pair(self, t):
        """Both representations of round t (1-based), regardless of phase.

        Evaluation backdoor only; the learner never sees this."""
        x1 = self.X1n[t - 1]
        return x1, evolve_features(x1, self.emap)

    def __iter__(self):
        for t in range(1, self.schedule.n_total + 1):
            phase = self.schedule.phase_of(t)
            x1 = self.X1n[t - 1] if phase in ("T1", "Tb") else None
            x2 = (
                evolve_features(self.X1n[t - 1], self.emap)
                if phase in ("Tb", "T2")
                else None
            )
            yield Instance(t=t, phase=phase, y=int(self.labels[t - 1]), x_s1=x1, x_s2=x2)


def generate_blobs(n, d1, n_classes, margin, seed):
    """Labeled Gaussian-blobs dataset: class means margin/2 from the origin
    (antipodal for two classes), heteroscedastic noise.

    Class c draws noise with standard deviation 1 + c/(2(C-1)), so the
    classes differ in spread as well as location (as real two-class tabular
    data such as gamma/hadron showers do). At small margins the best boundary
    is therefore curved; a large margin still makes the classes linearly
    separable."""
    if n < 1 or d1 < 1 or n_classes < 2 or margin < 0:
        raise ContractViolation("invalid blob spec")
    rng = RngState(seed)
    means = np.zeros((n_classes, d1))
    first = rng.standard_normal(d1)
    first /= np.linalg.norm(first)
    means[0] = 0.5 * margin * first
    if n_classes == 2:
        means[1] = -means[0]
    else:
        for c in range(1, n_classes):
            u = rng.standard_normal(d1)
            u /= np.linalg.norm(u)
            means[c] = 0.5 * margin * u
    scales = 1.0 + 0.5 * np.arange(n_classes) / (n_classes - 1)
    y = rng.integers(0, n_classes, n)
    X = means[y] + scales[y][:, None] * rng.standard_normal((n, d1))
    return X, np.asarray(y, dtype=np.int64)


def write_fixture_csv(path, X, y):
    """Write a dataset in the loader's format: f0..f{d-1} columns plus label."""
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(X.shape[1])] + ["label"])
        for row, label in zip(X, y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
