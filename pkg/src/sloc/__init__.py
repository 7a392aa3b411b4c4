"""Gaussian-channel measure decomposition and stochastic localization."""
