"""Simulation and parameter estimation for single-pass OPA squeezing experiments."""
