"""Dataset preparation, training and Experiments 1-3 on an output directory.

Layout under ``out``::

    dataset/manifest.csv, dataset/classes.txt, dataset/<class>/<clip>.wav
    models/<arch>.ckpt, accuracy.csv
    experiment1/results.csv, summary.csv, summary_by_model.csv, label_histogram.csv,
                adversarial/<attack>/<model>/<class>/<clip>.wav, spectrograms/<model>/*.pgm
    experiment2/results.csv, targeted_snr.csv, success_matrix.csv
    experiment3/transfer.csv
"""
from __future__ import annotations

import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from ..attacks import ATTACKS, AttackAborted
from ..audio_io import DatasetManifest, Waveform, default_class_specs, load_wav, save_wav, synthesize_dataset
from ..features import logmel_forward, spectrogram_to_pgm
from ..metrics import (
    label_distribution,
    read_results_csv,
    results_csv,
    success_matrix_csv,
    summarize,
    targeted_snr_csv,
    targeted_snr_matrix,
    transfer_matrix,
)
from ..models import build_model, load_checkpoint, save_checkpoint, train
from ..models.training import accuracy_csv
from .config import ExperimentConfig

log = logging.getLogger("advaudio")


class PreconditionError(RuntimeError):
    """A required input artifact is missing."""


@dataclass(frozen=True)
class Workspace:
    root: Path

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    @property
    def manifest(self) -> Path:
        return self.dataset / "manifest.csv"

    @property
    def class_list(self) -> Path:
        return self.dataset / "classes.txt"

    def checkpoint(self, arch: str) -> Path:
        return self.root / "models" / f"{arch}.ckpt"

    @property
    def accuracy(self) -> Path:
        return self.root / "accuracy.csv"

    def experiment(self, n: int) -> Path:
        return self.root / f"experiment{n}"

    def adversary(self, attack: str, model: str, source_file: str) -> Path:
        return self.experiment(1) / "adversarial" / attack / model / source_file


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise PreconditionError(f"missing {path} ({hint})")
    return path


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


# ----------------------------------------------------------------------------- prepare / train

def class_specs(cfg: ExperimentConfig):
    by_name = {s.name: s for s in default_class_specs()}
    return [replace(by_name[c], duration=cfg.duration) for c in cfg.classes]


def prepare(cfg: ExperimentConfig) -> DatasetManifest:
    ws = Workspace(Path(cfg.out))
    manifest, waves = synthesize_dataset(class_specs(cfg), cfg.per_class, cfg.seed)
    ws.dataset.mkdir(parents=True, exist_ok=True)
    for entry, w in zip(manifest.entries, waves):
        path = ws.dataset / entry.path
        path.parent.mkdir(parents=True, exist_ok=True)
        save_wav(path, w, cfg.encoding)
    _write_text(ws.manifest, manifest.to_csv())
    _write_text(ws.class_list, "".join(f"{c}\n" for c in manifest.class_names))
    log.info("prepared %d clips in %s", len(waves), ws.dataset)
    return manifest


def load_dataset(cfg: ExperimentConfig) -> tuple[DatasetManifest, list[Waveform]]:
    ws = Workspace(Path(cfg.out))
    hint = "run 'advaudio prepare' first"
    names = _require(ws.class_list, hint).read_text(encoding="utf-8").split()
    manifest = DatasetManifest.from_csv(_require(ws.manifest, hint).read_text(encoding="utf-8"), names)
    if tuple(names) != tuple(cfg.classes):
        raise PreconditionError(f"{ws.class_list} lists {names}, config expects {list(cfg.classes)}")
    waves = []
    for e in manifest.entries:
        w = load_wav(_require(ws.dataset / e.path, hint))
        waves.append(Waveform(w.samples, w.sample_rate, e.path))
    return manifest, waves


def train_models(cfg: ExperimentConfig):
    """Train every configured architecture; returns (reports, failures)."""
    ws = Workspace(Path(cfg.out))
    manifest, waves = load_dataset(cfg)
    reports, failures = [], {}
    for i, arch in enumerate(cfg.models):
        seed = cfg.seed + i
        try:
            model = build_model(arch, seed=seed, n_classes=manifest.n_classes, batch_size=cfg.batch_size)
            model, rep = train(model, manifest, waves, epochs=cfg.epochs, lr=cfg.learning_rate, seed=seed)
        except (ValueError, ArithmeticError) as e:
            log.error("training %s failed: %s", arch, e)
            failures[arch] = str(e)
            continue
        ws.checkpoint(arch).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, ws.checkpoint(arch))
        reports.append(rep)
        log.info("%s: train %.3f test %.3f", arch, rep.train_accuracy, rep.test_accuracy)
    if reports:
        _write_text(ws.accuracy, accuracy_csv(reports))
    return reports, failures


def load_models(cfg: ExperimentConfig) -> dict:
    ws = Workspace(Path(cfg.out))
    return {arch: load_checkpoint(_require(ws.checkpoint(arch), "run 'advaudio train' first"))
            for arch in cfg.models}


# ----------------------------------------------------------------------------- attack jobs

@dataclass(frozen=True)
class Job:
    attack: str
    params: tuple
    model: str
    index: int  # manifest entry
    label: int
    target: int | None = None
    restarts: int = 1


_WORKER: dict = {}


def _init_worker(checkpoints: dict, waves: list):
    _WORKER["models"] = {name: load_checkpoint(path) for name, path in checkpoints.items()}
    _WORKER["waves"] = waves


def _run_job(job: Job, models=None, waves=None):
    models = models if models is not None else _WORKER["models"]
    waves = waves if waves is not None else _WORKER["waves"]
    model, w = models[job.model], waves[job.index]
    attack = ATTACKS[job.attack](**dict(job.params))
    params = attack.get_params()
    result = None
    if job.target is not None and int(np.argmax(model.predict_proba(w.samples[None, :])[0])) == job.target:
        # clip already classified as the target: recorded unperturbed for every algorithm
        return _unperturbed(attack, model, w, job, 0)
    for attempt in range(job.restarts):
        try:
            result = attack.run(model, w, label=job.label, target=job.target)
        except AttackAborted as e:
            log.warning("%s on %s/%s aborted at iteration %d", job.attack, job.model, w.source_id, e.iteration)
            result = _unperturbed(attack, model, w, job, e.iteration)
        if result.success or attempt + 1 == job.restarts:
            break
        # a restart doubles the iteration budget of iterative attacks
        for key in ("iterations", "max_iter", "inner_iterations"):
            if key in params:
                params[key] *= 2
        attack = ATTACKS[job.attack](**params)
    result.model = job.model
    return result


def _unperturbed(attack, model, w, job: Job, iterations: int):
    x, sr, source, label, target, p = attack._prepare(model, w, job.label, job.target)
    result = attack._finalize(model, x, x, sr, source, label, target, p, iterations)
    result.model = job.model
    return result


def run_jobs(cfg: ExperimentConfig, jobs: list[Job], models: dict, waves: list) -> list:
    if cfg.workers <= 1 or len(jobs) <= 1:
        return [_run_job(j, models, waves) for j in jobs]
    ws = Workspace(Path(cfg.out))
    ckpts = {name: str(ws.checkpoint(name)) for name in models}
    with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(ckpts, waves)) as pool:
        return list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))


def attack_params(cfg: ExperimentConfig, name: str) -> tuple:
    params = dict(cfg.attacks.get(name, {}))
    if name == "white_noise":
        params.setdefault("random_state", cfg.seed)
    return tuple(sorted(params.items()))


def select_test_files(manifest: DatasetManifest, class_ids, per_class: int, seed: int, tag: str) -> list[int]:
    """``per_class`` randomly chosen test clips per class, as manifest indices."""
    chosen = []
    for c in class_ids:
        pool = [i for i, e in enumerate(manifest.entries) if e.split == "test" and e.class_id == c]
        if per_class > len(pool):
            raise PreconditionError(f"class {manifest.class_names[c]} has {len(pool)} test clips, need {per_class}")
        rng = np.random.default_rng([seed, zlib.crc32(tag.encode()), c])
        chosen += sorted(rng.choice(pool, per_class, replace=False).tolist())
    return chosen


def _stem(path: str) -> str:
    return Path(path).stem


def _snr_tag(snr: float) -> str:
    return "inf" if not np.isfinite(snr) else f"{snr:.1f}"


# ----------------------------------------------------------------------------- experiments

def experiment1_jobs(cfg: ExperimentConfig, manifest: DatasetManifest) -> list[Job]:
    files = select_test_files(manifest, range(manifest.n_classes), cfg.exp1_per_class, cfg.seed, "experiment1")
    return [Job(a, attack_params(cfg, a), m, i, manifest.entries[i].class_id)
            for i in files for a in cfg.exp1_attacks for m in cfg.models]


def experiment2_jobs(cfg: ExperimentConfig, manifest: DatasetManifest) -> list[Job]:
    """One job per (file, other class in the subset, algorithm, model)."""
    ids = [manifest.class_names.index(c) for c in cfg.exp2_classes]
    files = select_test_files(manifest, ids, cfg.exp2_per_class, cfg.seed, "experiment2")
    return [Job(a, attack_params(cfg, a), m, i, manifest.entries[i].class_id, t, cfg.exp2_restarts)
            for i in files for t in ids if t != manifest.entries[i].class_id
            for a in cfg.exp2_attacks for m in cfg.models]


def experiment1(cfg: ExperimentConfig) -> list:
    """Untargeted attacks on a per-class subset of the test split."""
    ws = Workspace(Path(cfg.out))
    manifest, waves = load_dataset(cfg)
    models = load_models(cfg)
    jobs = experiment1_jobs(cfg, manifest)
    log.info("experiment 1: %d attack runs", len(jobs))
    results = run_jobs(cfg, jobs, models, waves)
    results.sort(key=lambda r: (r.source_id, r.attack, r.model))

    out = ws.experiment(1)
    out.mkdir(parents=True, exist_ok=True)
    for r in results:
        path = ws.adversary(r.attack, r.model, r.source_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_wav(path, r.adversarial, "float32")
    _write_text(out / "results.csv", results_csv(results))
    _write_text(out / "summary.csv", summarize(results, "attack").to_csv())
    _write_text(out / "summary_by_model.csv", summarize(results, "model").to_csv())
    lines = ["attack,class_id,class,count"]
    for a in sorted(cfg.exp1_attacks):
        hist = label_distribution([r for r in results if r.attack == a], manifest.n_classes)
        lines += [f"{a},{c},{manifest.class_names[c]},{int(n)}" for c, n in enumerate(hist)]
    _write_text(out / "label_histogram.csv", "\n".join(lines) + "\n")
    _write_spectrograms(ws, results, waves, manifest)
    return results


def _write_spectrograms(ws: Workspace, results: list, waves: list, manifest: DatasetManifest) -> None:
    """Clean / C&W / DeepFool spectrogram triples with the SNR in the filenames."""
    by_key = {(r.model, r.source_id, r.attack): r for r in results}
    index = {e.path: i for i, e in enumerate(manifest.entries)}
    done = set()
    for (model, source, _), _r in sorted(by_key.items()):
        if (model, source) in done:
            continue
        done.add((model, source))
        d = ws.experiment(1) / "spectrograms" / model
        d.mkdir(parents=True, exist_ok=True)
        stem = _stem(source)
        clean = waves[index[source]]
        (d / f"{stem}_clean.pgm").write_bytes(spectrogram_to_pgm(logmel_forward(clean).values))
        for attack in ("cw", "deepfool"):
            r = by_key.get((model, source, attack))
            if r is not None:
                img = spectrogram_to_pgm(logmel_forward(r.adversarial).values)
                (d / f"{stem}_{attack}_{_snr_tag(r.snr_db)}dB.pgm").write_bytes(img)


def experiment2(cfg: ExperimentConfig) -> list:
    """Targeted attacks between every ordered pair of the class subset."""
    ws = Workspace(Path(cfg.out))
    manifest, waves = load_dataset(cfg)
    models = load_models(cfg)
    ids = [manifest.class_names.index(c) for c in cfg.exp2_classes]
    jobs = experiment2_jobs(cfg, manifest)
    log.info("experiment 2: %d attack runs", len(jobs))
    results = run_jobs(cfg, jobs, models, waves)
    results.sort(key=lambda r: (r.source_id, r.target_label, r.attack, r.model))

    out = ws.experiment(2)
    mats = [targeted_snr_matrix(results, ids, algorithm=a) for a in sorted(cfg.exp2_attacks)]
    _write_text(out / "results.csv", results_csv(results))
    _write_text(out / "targeted_snr.csv", targeted_snr_csv(mats, manifest.class_names))
    _write_text(out / "success_matrix.csv", success_matrix_csv(mats, manifest.class_names))
    return results


def experiment3(cfg: ExperimentConfig):
    """Zero-knowledge transfer of Experiment 1 adversaries between models."""
    ws = Workspace(Path(cfg.out))
    hint = "run 'advaudio attack --experiment 1' first"
    rows = read_results_csv(_require(ws.experiment(1) / "results.csv", hint).read_text(encoding="utf-8"))
    models = load_models(cfg)
    adversaries = {m: [] for m in cfg.models}
    for r in rows:
        if r.attack in cfg.exp3_attacks and r.success and r.model in adversaries:
            w = load_wav(_require(ws.adversary(r.attack, r.model, r.source_id), hint))
            adversaries[r.model].append(SimpleNamespace(adversarial=w, original_label=r.original_label, success=True))
    # the WAVs on disk are float32 already; pcm16 adds a second, lossy round trip
    matrix = transfer_matrix(adversaries, models, encoding="pcm16" if cfg.exp3_encoding == "pcm16" else None)
    _write_text(ws.experiment(3) / "transfer.csv", matrix.to_csv())
    return matrix


def report(cfg: ExperimentConfig) -> str:
    """Plain-text digest of whatever outputs exist under ``out``."""
    ws = Workspace(Path(cfg.out))
    parts = []
    if ws.accuracy.exists():
        parts.append("== model accuracy (train/test)\n" + ws.accuracy.read_text(encoding="utf-8"))
    e1 = ws.experiment(1) / "results.csv"
    if e1.exists():
        rows = read_results_csv(e1.read_text(encoding="utf-8"))
        parts.append("== experiment 1: untargeted attacks (desk-scale analog)\n"
                     + _table(summarize(rows, "attack").rows) + "\n\nper model\n"
                     + _table(summarize(rows, "model").rows))
        lines = []
        for a in sorted({r.attack for r in rows}):
            sel = [r for r in rows if r.attack == a]
            snr = [r.snr_db for r in sel if r.success and np.isfinite(r.snr_db)]
            gt = [r.conf_gt_new for r in sel if r.success]
            hist = label_distribution(sel, 1 + max(max(r.new_label, r.original_label) for r in rows))
            skew = hist.max() / hist.mean() if hist.sum() else float("nan")
            lines.append(f"{a:12s} median SNR {np.median(snr) if snr else float('nan'):6.2f} dB  "
                         f"median conf_gt_new {np.median(gt) if gt else float('nan'):.4f}  "
                         f"label-histogram max/mean {skew:.2f}")
        parts.append("medians over successful attacks\n" + "\n".join(lines))
    e2 = ws.experiment(2) / "results.csv"
    if e2.exists():
        rows2 = read_results_csv(e2.read_text(encoding="utf-8"))
        lines = ["== experiment 2: targeted attacks"]
        for a in sorted({r.attack for r in rows2}):
            sel = [r for r in rows2 if r.attack == a]
            lines.append(f"{a:12s} success {100 * np.mean([r.success for r in sel]):6.2f}%  n={len(sel)}")
        parts.append("\n".join(lines) + "\n" + (ws.experiment(2) / "targeted_snr.csv").read_text(encoding="utf-8"))
    e3 = ws.experiment(3) / "transfer.csv"
    if e3.exists():
        parts.append("== experiment 3: transfer percent (row = attacked model, column = source)\n"
                     + e3.read_text(encoding="utf-8"))
    if not parts:
        raise PreconditionError(f"nothing to report under {ws.root}")
    text = "\n\n".join(p.rstrip("\n") for p in parts) + "\n"
    _write_text(ws.root / "report.txt", text)
    return text


def _table(rows) -> str:
    head = f"{'attack':12s} {'model':15s} {'success%':>9s} {'GT':>7s} {'New':>7s} {'GT new':>7s} {'SNR dB':>7s} {'n':>4s}"
    body = [f"{r.attack:12s} {r.model:15s} {r.success_pct:9.2f} {r.conf_gt:7.4f} {r.conf_new:7.4f} "
            f"{r.conf_gt_new:7.4f} {r.snr_db:7.2f} {r.n:4d}" for r in rows]
    return "\n".join([head, *body])


__all__ = [
    "PreconditionError", "Workspace", "prepare", "load_dataset", "train_models", "load_models",
    "experiment1", "experiment2", "experiment3", "report", "select_test_files", "run_jobs", "Job",
    "attack_params", "experiment1_jobs", "experiment2_jobs",
]
