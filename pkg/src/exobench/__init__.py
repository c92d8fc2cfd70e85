"""Quantitative test-bench toolkit for upper-limb exoskeletons."""
__version__ = "0.1.0"
