"""ELM toolkit for quantitative finance: pricing-function learning,
incremental network growth, physics-informed PDE solving, implied-vol
surface fitting and auditing, a GPR baseline, and intraday classification."""

__version__ = "0.1.0"
