"""Benchmark scenarios: truth simulation, observations and estimator families."""
