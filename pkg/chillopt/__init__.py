"""Chiller-plant energy optimization: forecasting, surrogate modeling, setpoint search and savings verification."""

__version__ = "0.4.0"
