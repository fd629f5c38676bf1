"""Simulation benchmark comparing multi-response estimators (PCR, PLS1, PLS2,
predictor and simultaneous envelopes) on data with controlled relevant
subspaces."""

__version__ = "0.1.0"
