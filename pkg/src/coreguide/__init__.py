"""Core-guided branching for CDCL: WLIG encoding, a weighted GCN core predictor, and a seedable solver."""

__version__ = "0.1.0"
