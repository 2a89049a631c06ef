"""Estimation after parameter selection: PSML estimators, Psi-CRB and a Monte Carlo harness."""

__version__ = "0.1.0"
