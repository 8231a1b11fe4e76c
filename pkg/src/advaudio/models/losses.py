"""Loss specifications accepted by ``AudioClassifier.input_gradient``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class CrossEntropy:
    """-log p(label); for multi-head models p is the averaged probability."""

    label: int


@dataclass(frozen=True)
class ClassScore:
    """Logit surrogate (``kind='logit'``) or probability (``kind='prob'``) of one class."""

    label: int
    kind: str = "logit"


@dataclass(frozen=True)
class Margin:
    """z[positive] - z[negative] on the logit surrogate."""

    positive: int
    negative: int


@dataclass(frozen=True)
class Constant:
    value: float = 0.0


LossSpec = Union[CrossEntropy, ClassScore, Margin, Constant]
