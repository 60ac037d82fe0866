"""Self-paced transfer classifier learning for noisy, partial domain adaptation."""

__version__ = "0.1.0"
