"""Train miniature sound event classifiers and attack them with adversarial audio."""

__version__ = "0.1.0"
