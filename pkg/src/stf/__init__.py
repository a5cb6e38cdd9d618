"""Continuous-time trajectory fitting for smoothing, tracking and forecasting."""
