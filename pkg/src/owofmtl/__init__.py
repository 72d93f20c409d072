"""Online-within-online fair multi-task learning with alpha-fairness."""

__version__ = "0.1.0"
