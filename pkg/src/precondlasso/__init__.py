"""Preconditioned sparse linear regression for low-treewidth Gaussian
graphical models, plus failure diagnostics and hard-instance generators."""

__version__ = "0.1.0"
