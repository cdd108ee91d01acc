"""ergolab: drift conditions, hitting-time moments and functional
inequalities for one-dimensional reversible diffusions."""

__version__ = "0.1.0"
