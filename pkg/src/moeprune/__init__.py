"""Expert pruning for Mixture-of-Experts translation models, at desk scale."""

__version__ = "0.1.0"
