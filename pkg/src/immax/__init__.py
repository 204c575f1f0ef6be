"""Class-imbalanced margin losses and IMMAX training."""

__version__ = "0.1.0"
