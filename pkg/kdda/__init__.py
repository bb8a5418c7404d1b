"""Progressive joint knowledge distillation and unsupervised domain adaptation."""

__version__ = "0.1.0"
