"""cipherfit: encrypted fine-tuning of linear classification heads."""

__version__ = "0.1.0"
