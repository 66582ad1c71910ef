"""Reference external predictor for the trajectory verifier."""

from .serve import AdapterConfig, ConstantVelocityModel, main, serve

__all__ = ["AdapterConfig", "ConstantVelocityModel", "main", "serve"]

__version__ = "0.1.0"
