"""Gradient-based adversarial attacks on waveform classifiers."""
from .base import Attack, AttackAborted, AttackResult
from .baselines import FGSM, WhiteNoise
from .cw import CarliniWagnerL2
from .deepfool import DeepFool
from .lbfgs import LBFGSAttack, LBFGSResult, lbfgs_box
from .toy import AffineClassifier, logistic_classifier

ATTACKS = {
    "white_noise": WhiteNoise,
    "fgsm": FGSM,
    "deepfool": DeepFool,
    "cw": CarliniWagnerL2,
    "lbfgs": LBFGSAttack,
}

__all__ = [
    "Attack", "AttackAborted", "AttackResult", "WhiteNoise", "FGSM", "DeepFool", "CarliniWagnerL2",
    "LBFGSAttack", "LBFGSResult", "lbfgs_box", "AffineClassifier", "logistic_classifier", "ATTACKS",
]
