"""Simulation lab for the damped stochastic isentropic Euler system in 1D."""

__version__ = "0.1.0"
