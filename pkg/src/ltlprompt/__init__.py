"""Verified prompt optimization: plans, LTL checking, textual gradients."""

__version__ = "0.1.0"
