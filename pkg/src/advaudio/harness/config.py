"""Flat ``key = value`` experiment configuration.

Grammar, one statement per line::

    # comment                 blank lines and lines starting with '#' are skipped
    seed = 0
    dataset.per_class = 30
    models = vgg_mini, crnn_mini
    attack.cw.iterations = 100
    attack.cw.c_range = 1e-3, 1e2

Keys are dotted paths; values are scalars or comma-separated lists.
``none`` clears an optional value. Unknown keys, repeated keys and values
of the wrong type are errors that name the offending line.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..attacks import ATTACKS
from ..audio_io import default_class_specs
from ..models import ARCHITECTURES


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


DEFAULT_CLASSES = tuple(s.name for s in default_class_specs())

# Attack settings used by the experiments when the config does not say
# otherwise. The attack classes keep their textbook defaults; these are
# budgets sized for a single CPU core (see README).
EXPERIMENT_ATTACK_DEFAULTS = {
    "white_noise": {"snr_db": 20.0, "max_draws": 1},
    "fgsm": {"target_snr_db": 20.0},
    "deepfool": {},
    "cw": {"iterations": 100, "learning_rate": 1e-2, "final_learning_rate": 1e-4, "binary_search_steps": 3},
    "lbfgs": {},
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "out"
    workers: int = 1
    # dataset
    classes: tuple[str, ...] = DEFAULT_CLASSES
    per_class: int = 30
    duration: float = 1.0
    encoding: str = "pcm16"
    # models
    models: tuple[str, ...] = ARCHITECTURES
    epochs: int = 20
    learning_rate: float = 3e-3
    batch_size: int = 16
    # experiment 1: untargeted
    exp1_per_class: int = 6
    exp1_attacks: tuple[str, ...] = ("white_noise", "fgsm", "deepfool", "cw")
    # experiment 2: targeted
    exp2_classes: tuple[str, ...] = DEFAULT_CLASSES[:6]
    exp2_per_class: int = 6
    exp2_restarts: int = 1
    exp2_attacks: tuple[str, ...] = ("cw", "lbfgs")
    # experiment 3: transfer
    exp3_attacks: tuple[str, ...] = ("deepfool", "cw")
    exp3_encoding: str = "float32"
    attacks: dict[str, dict] = field(default_factory=lambda: {k: dict(v) for k, v in EXPERIMENT_ATTACK_DEFAULTS.items()})

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.workers >= 1, f"workers must be >= 1, got {self.workers}")
        need(self.per_class >= 2, f"dataset.per_class must be >= 2, got {self.per_class}")
        need(self.duration > 0, f"dataset.duration must be positive, got {self.duration}")
        need(self.encoding in ("pcm16", "float32"), f"dataset.encoding must be pcm16 or float32, got {self.encoding}")
        need(self.exp3_encoding in ("pcm16", "float32"),
             f"experiment3.encoding must be pcm16 or float32, got {self.exp3_encoding}")
        need(len(self.classes) >= 2, "dataset.classes needs at least two classes")
        need(len(set(self.classes)) == len(self.classes), "dataset.classes has duplicates")
        for c in self.classes:
            need(c in DEFAULT_CLASSES, f"unknown class {c!r}; known: {', '.join(DEFAULT_CLASSES)}")
        need(len(self.models) >= 1, "models is empty")
        for m in self.models:
            need(m in ARCHITECTURES, f"unknown model {m!r}; known: {', '.join(ARCHITECTURES)}")
        need(len(set(self.models)) == len(self.models), "models has duplicates")
        need(self.epochs >= 1 and self.batch_size >= 1 and self.learning_rate > 0, "bad training schedule")
        n_test = self.n_test_per_class
        need(1 <= self.exp1_per_class <= n_test,
             f"experiment1.per_class={self.exp1_per_class} but only {n_test} test examples per class")
        need(1 <= self.exp2_per_class <= n_test,
             f"experiment2.per_class={self.exp2_per_class} but only {n_test} test examples per class")
        need(self.exp2_restarts >= 1, "experiment2.restarts must be >= 1")
        for c in self.exp2_classes:
            need(c in self.classes, f"experiment2 class {c!r} is not in dataset.classes")
        need(len(self.exp2_classes) >= 2, "experiment2.classes needs at least two classes")
        for name in (*self.exp1_attacks, *self.exp2_attacks, *self.exp3_attacks):
            need(name in ATTACKS, f"unknown attack {name!r}")
        for name in self.exp2_attacks:
            need(ATTACKS[name].supports_target, f"{name} cannot run targeted attacks")
        for name in self.exp3_attacks:
            need(name in self.exp1_attacks, f"experiment3 attack {name!r} is not run by experiment1")
        for name, params in self.attacks.items():
            need(name in ATTACKS, f"unknown attack {name!r}")
            known = ATTACKS[name]().get_params()
            for key in params:
                need(key in known, f"attack.{name}.{key} is not a parameter of {name}")
            try:
                ATTACKS[name](**{**known, **params}).validate()
            except (TypeError, ValueError) as e:
                raise ConfigError(f"attack.{name}: {e}") from None

    @property
    def n_test_per_class(self) -> int:
        # mirrors the 80/20 split in synthesize_dataset
        return min(self.per_class - 1, max(1, int(round(0.2 * self.per_class))))

    def attack(self, name: str):
        """A configured attack estimator."""
        return ATTACKS[name](**self.attacks.get(name, {}))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Render in the config grammar; ``parse_config(c.to_text())`` equals ``c``."""
        lines = []
        for key, attr in _KEYS.items():
            lines.append(f"{key} = {_render(getattr(self, attr))}")
        for name in sorted(self.attacks):
            for k, v in sorted(self.attacks[name].items()):
                lines.append(f"attack.{name}.{k} = {_render(v)}")
        return "\n".join(lines) + "\n"


_KEYS = {
    "seed": "seed",
    "out": "out",
    "workers": "workers",
    "dataset.classes": "classes",
    "dataset.per_class": "per_class",
    "dataset.duration": "duration",
    "dataset.encoding": "encoding",
    "models": "models",
    "train.epochs": "epochs",
    "train.learning_rate": "learning_rate",
    "train.batch_size": "batch_size",
    "experiment1.per_class": "exp1_per_class",
    "experiment1.attacks": "exp1_attacks",
    "experiment2.classes": "exp2_classes",
    "experiment2.per_class": "exp2_per_class",
    "experiment2.restarts": "exp2_restarts",
    "experiment2.attacks": "exp2_attacks",
    "experiment3.attacks": "exp3_attacks",
    "experiment3.encoding": "exp3_encoding",
}
_FIELD_TYPES = {f.name: f.default for f in dataclasses.fields(ExperimentConfig) if f.name != "attacks"}


def _render(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_render(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(text: str, like):
    """Parse ``text`` to the type of the example value ``like``."""
    text = text.strip()
    if isinstance(like, bool):
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if like and isinstance(like[0], (int, float)):
            return tuple(float(t) for t in items)
        return tuple(items)
    if like is None:
        return None if text.lower() == "none" else float(text)
    return text


def _attack_default(name: str, key: str):
    value = ATTACKS[name]().get_params()[key]
    if isinstance(value, tuple):
        return tuple(float(v) for v in value)
    return value


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    attacks = {k: dict(v) for k, v in EXPERIMENT_ATTACK_DEFAULTS.items()}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{where}: key {key!r} repeats line {seen[key]}")
        seen[key] = lineno
        try:
            if key in _KEYS:
                attr = _KEYS[key]
                values[attr] = _coerce(value, _FIELD_TYPES[attr])
            elif key.startswith("attack.") and key.count(".") == 2:
                _, name, param = key.split(".")
                if name not in ATTACKS:
                    raise ConfigError(f"{where}: unknown attack {name!r} in key {key!r}")
                if param not in ATTACKS[name]().get_params():
                    raise ConfigError(f"{where}: unknown key {key!r} ({name} has no parameter {param!r})")
                attacks[name][param] = _coerce(value, _attack_default(name, param))
            else:
                raise ConfigError(f"{where}: unknown key {key!r}")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{where}: bad value for {key!r}: {e}") from None
    try:
        return ExperimentConfig(attacks=attacks, **values)
    except ConfigError as e:
        raise ConfigError(f"{source}: {e}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text, str(path))
