"""Signal-to-noise ratio, experiment summaries, label histograms,
targeted-SNR and transfer matrices, and their CSV exports.

Aggregations are duck-typed over result records: anything with the
``AttackResult`` field names works, including ``ResultRow`` records read
back from ``results.csv``. A perturbation of exactly zero has SNR ``inf``;
that sentinel is what marks a zero-perturbation result here.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

RESULTS_HEADER = ["attack", "model", "source_file", "orig_label", "new_label", "target_label", "success",
                  "conf_gt", "conf_new", "conf_gt_new", "snr_db", "iterations"]
SUMMARY_HEADER = ["attack", "model", "success_pct", "conf_gt", "conf_new", "conf_gt_new", "snr_db", "n"]
TRANSFER_HEADER = ["row-model", "col-model", "percent"]
TARGETED_HEADER = ["algorithm", "src_class", "dst_class", "mean_snr_db", "successes"]
NA = "NA"


class UndefinedSNRError(ValueError):
    """The reference signal has zero energy."""


def snr_db(x, r) -> float:
    """10*log10(sum x^2 / sum r^2) with x the clean reference; +inf when r == 0."""
    x = np.asarray(x.samples if hasattr(x, "samples") else x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if x.shape != r.shape:
        raise ValueError(f"signal shape {x.shape} and perturbation shape {r.shape} differ")
    px = float(np.sum(x * x))
    if px == 0.0:
        raise UndefinedSNRError("SNR is undefined for a silent reference signal")
    pr = float(np.sum(r * r))
    if pr == 0.0:
        return float("inf")
    return 10.0 * np.log10(px / pr)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    out = f"{v:.6f}"
    return "0.000000" if out == "-0.000000" else out


def _to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([cell if isinstance(cell, str) else _fmt(cell) for cell in row])
    return buf.getvalue()


# ----------------------------------------------------------------------------- result rows

@dataclass(frozen=True)
class ResultRow:
    """Waveform-free view of an attack result, as stored in ``results.csv``."""

    attack: str
    model: str
    source_id: str
    original_label: int
    new_label: int
    target_label: int | None
    success: bool
    conf_gt: float
    conf_new: float
    conf_gt_new: float
    snr_db: float
    iterations_used: int

    @property
    def targeted(self) -> bool:
        return self.target_label is not None

    @classmethod
    def of(cls, r) -> "ResultRow":
        return cls(r.attack, r.model, r.source_id, int(r.original_label), int(r.new_label),
                   None if r.target_label is None else int(r.target_label), bool(r.success),
                   float(r.conf_gt), float(r.conf_new), float(r.conf_gt_new), float(r.snr_db),
                   int(r.iterations_used))


def results_csv(results: Iterable) -> str:
    """One row per result in the given order."""
    rows = ([r.attack, r.model, r.source_id, r.original_label, r.new_label, r.target_label, bool(r.success),
             r.conf_gt, r.conf_new, r.conf_gt_new, r.snr_db, r.iterations_used] for r in results)
    return _to_csv(RESULTS_HEADER, rows)


def read_results_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != RESULTS_HEADER:
        raise ValueError(f"results header must be {','.join(RESULTS_HEADER)}; got {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(RESULTS_HEADER):
            raise ValueError(f"line {lineno}: expected {len(RESULTS_HEADER)} fields, got {len(row)}")
        a, m, src, orig, new, tgt, ok, cg, cn, cgn, snr, it = row
        out.append(ResultRow(a, m, src, int(orig), int(new), int(tgt) if tgt else None, ok == "1",
                             float(cg), float(cn), float(cgn), float(snr), int(it)))
    return out


# ----------------------------------------------------------------------------- summaries

@dataclass(frozen=True)
class SummaryRow:
    attack: str
    model: str
    success_pct: float
    conf_gt: float
    conf_new: float
    conf_gt_new: float
    snr_db: float  # nan when every result in the group has zero perturbation
    n: int


@dataclass
class ExperimentSummary:
    rows: list[SummaryRow]

    def to_csv(self) -> str:
        return _to_csv(SUMMARY_HEADER, ([r.attack, r.model, r.success_pct, r.conf_gt, r.conf_new, r.conf_gt_new,
                                         r.snr_db, r.n] for r in self.rows))

    def row(self, attack: str, model: str = "all") -> SummaryRow:
        for r in self.rows:
            if r.attack == attack and r.model == model:
                return r
        raise KeyError((attack, model))


def _mean(values) -> float:
    # fsum is exactly rounded, so the mean does not depend on input order
    values = [float(v) for v in values if np.isfinite(v)]
    return math.fsum(values) / len(values) if values else float("nan")


def summarize(results: Iterable, group_by: str = "attack") -> ExperimentSummary:
    """Success percentage and mean confidences/SNR per attack, or per (attack, model).

    With ``group_by="attack"`` the model column reads "all". SNR means skip
    zero-perturbation results (their SNR is infinite).
    """
    if group_by not in ("attack", "model"):
        raise ValueError(f"group_by must be 'attack' or 'model', got {group_by!r}")
    results = list(results)
    if not results:
        raise ValueError("cannot summarize an empty result set")
    groups: dict[tuple[str, str], list] = {}
    for r in results:
        key = (r.attack, r.model if group_by == "model" else "all")
        groups.setdefault(key, []).append(r)
    rows = []
    for (attack, model), rs in sorted(groups.items()):
        rows.append(SummaryRow(
            attack, model,
            100.0 * sum(bool(r.success) for r in rs) / len(rs),
            _mean(r.conf_gt for r in rs),
            _mean(r.conf_new for r in rs),
            _mean(r.conf_gt_new for r in rs),
            _mean(r.snr_db for r in rs),
            len(rs),
        ))
    return ExperimentSummary(rows)


def label_distribution(results: Iterable, n_classes: int) -> np.ndarray:
    """Counts of the adversarial label over successful attacks, indexed by class id."""
    hist = np.zeros(int(n_classes), dtype=np.int64)
    for r in results:
        if r.success:
            hist[int(r.new_label)] += 1
    return hist


def label_histogram_csv(hist: np.ndarray, class_names: Sequence[str] | None = None) -> str:
    names = list(class_names) if class_names is not None else [str(i) for i in range(len(hist))]
    return _to_csv(["class_id", "class", "count"], ([i, names[i], int(c)] for i, c in enumerate(hist)))


# ----------------------------------------------------------------------------- targeted SNR

@dataclass
class TargetedSnrMatrix:
    """Mean SNR over successful attacks per ordered (source, target) class pair.

    ``mean_snr`` is nan where a pair has no successes and on the diagonal;
    ``successes`` is the companion count matrix.
    """

    algorithm: str
    classes: list[int]
    mean_snr: np.ndarray
    successes: np.ndarray
    attempts: np.ndarray

    def cell(self, src: int, dst: int) -> float | None:
        i, j = self.classes.index(src), self.classes.index(dst)
        if i == j:
            raise ValueError("diagonal cells are not applicable")
        v = self.mean_snr[i, j]
        return None if np.isnan(v) else float(v)

    def csv_rows(self, class_names: Sequence[str] | None = None):
        for i, src in enumerate(self.classes):
            for j, dst in enumerate(self.classes):
                s = class_names[src] if class_names is not None else str(src)
                d = class_names[dst] if class_names is not None else str(dst)
                if i == j:
                    yield [self.algorithm, s, d, NA, NA]
                else:
                    yield [self.algorithm, s, d, self.mean_snr[i, j], int(self.successes[i, j])]


def targeted_snr_matrix(results: Iterable, classes: Sequence[int], algorithm: str | None = None
                        ) -> TargetedSnrMatrix:
    """Build the pairwise matrix from targeted results of one algorithm.

    Results whose source or target class is outside ``classes`` are ignored.
    With ``algorithm`` given, results of other attacks are ignored too.
    """
    classes = [int(c) for c in classes]
    if len(set(classes)) != len(classes):
        raise ValueError(f"duplicate classes in {classes}")
    pos = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    sums = np.empty((k, k), dtype=object)
    for idx in np.ndindex(k, k):
        sums[idx] = []
    succ = np.zeros((k, k), dtype=np.int64)
    tries = np.zeros((k, k), dtype=np.int64)
    names = set()
    for r in results:
        if r.target_label is None or (algorithm is not None and r.attack != algorithm):
            continue
        i, j = pos.get(int(r.original_label)), pos.get(int(r.target_label))
        if i is None or j is None or i == j:
            continue
        names.add(r.attack)
        tries[i, j] += 1
        if r.success and np.isfinite(r.snr_db):
            sums[i, j].append(r.snr_db)
            succ[i, j] += 1
    if algorithm is None:
        if len(names) > 1:
            raise ValueError(f"results mix algorithms {sorted(names)}; pass algorithm=")
        algorithm = names.pop() if names else ""
    mean = np.array([[_mean(sums[i, j]) for j in range(k)] for i in range(k)]).reshape(k, k)
    np.fill_diagonal(mean, np.nan)
    return TargetedSnrMatrix(algorithm, classes, mean, succ, tries)


def targeted_snr_csv(matrices: Sequence[TargetedSnrMatrix], class_names: Sequence[str] | None = None) -> str:
    rows = (row for m in matrices for row in m.csv_rows(class_names))
    return _to_csv(TARGETED_HEADER, rows)


def success_matrix_csv(matrices: Sequence[TargetedSnrMatrix], class_names: Sequence[str] | None = None) -> str:
    """Successes out of attempts per ordered pair; the confusion-style companion."""
    rows = []
    for m in matrices:
        for i, src in enumerate(m.classes):
            for j, dst in enumerate(m.classes):
                s = class_names[src] if class_names is not None else str(src)
                d = class_names[dst] if class_names is not None else str(dst)
                if i == j:
                    rows.append([m.algorithm, s, d, NA, NA])
                else:
                    rows.append([m.algorithm, s, d, int(m.successes[i, j]), int(m.attempts[i, j])])
    return _to_csv(["algorithm", "src_class", "dst_class", "successes", "attempts"], rows)


# ----------------------------------------------------------------------------- transfer

@dataclass
class TransferMatrix:
    """Percent of source-successful adversaries that also fool another model.

    Rows are the models under attack, columns the models the adversaries
    were crafted on. ``percent`` is nan on the diagonal and for sources with
    no adversaries; ``counts`` holds the number of adversaries per column.
    """

    models: list[str]
    percent: np.ndarray
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def cell(self, row: str, col: str) -> float | None:
        i, j = self.models.index(row), self.models.index(col)
        if i == j:
            raise ValueError("diagonal cells are not applicable")
        v = self.percent[i, j]
        return None if np.isnan(v) else float(v)

    def off_diagonal(self) -> list[float]:
        k = len(self.models)
        return [float(self.percent[i, j]) for i in range(k) for j in range(k)
                if i != j and not np.isnan(self.percent[i, j])]

    def mean(self, rows: Sequence[str], cols: Sequence[str]) -> float:
        """Mean over the defined off-diagonal cells in the given block."""
        vals = [self.percent[self.models.index(r), self.models.index(c)] for r in rows for c in cols if r != c]
        return _mean(vals)

    def to_csv(self) -> str:
        rows = []
        for i, r in enumerate(self.models):
            for j, c in enumerate(self.models):
                rows.append([r, c, NA if i == j else self.percent[i, j]])
        return _to_csv(TRANSFER_HEADER, rows)


def _round_trip(w, encoding: str | None):
    from .audio_io import read_wav, write_wav

    if encoding is None:
        return w
    return read_wav(write_wav(w, encoding), w.source_id)


def transfer_matrix(adversaries: Mapping[str, Sequence], models: Mapping[str, object],
                    encoding: str | None = "float32") -> TransferMatrix:
    """Evaluate each source model's successful adversaries on every other model.

    ``adversaries[source]`` holds attack results (anything with
    ``adversarial``, ``original_label`` and ``success``); only successful ones
    count. Target models are queried through ``predict_proba`` alone, behind
    a gradient-free wrapper. Audio goes through an encode/decode round trip
    in ``encoding`` first (None skips it).
    """
    from .models import QueryOnly

    names = list(models)
    k = len(names)
    percent = np.full((k, k), np.nan)
    counts = np.zeros(k, dtype=np.int64)
    oracles = {n: QueryOnly(models[n], name=n) for n in names}
    for j, src in enumerate(names):
        advs = [a for a in adversaries.get(src, ()) if a.success]
        counts[j] = len(advs)
        if not advs:
            continue
        X = np.stack([_round_trip(a.adversarial, encoding).samples for a in advs])
        gt = np.array([int(a.original_label) for a in advs])
        for i, dst in enumerate(names):
            if i == j:
                continue
            pred = np.argmax(oracles[dst].predict_proba(X), axis=1)
            percent[i, j] = 100.0 * float(np.mean(pred != gt))
    return TransferMatrix(names, percent, counts)


__all__ = [
    "UndefinedSNRError", "snr_db", "ResultRow", "results_csv", "read_results_csv", "SummaryRow",
    "ExperimentSummary", "summarize", "label_distribution", "label_histogram_csv", "TargetedSnrMatrix",
    "targeted_snr_matrix", "targeted_snr_csv", "success_matrix_csv", "TransferMatrix", "transfer_matrix",
    "RESULTS_HEADER", "SUMMARY_HEADER", "TRANSFER_HEADER", "TARGETED_HEADER",
]
