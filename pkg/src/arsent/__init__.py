"""Explainable Arabic sentiment classification with noise-regularized BiLSTM models."""

__version__ = "0.1.0"
