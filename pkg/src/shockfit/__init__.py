"""Steady transonic shock fitting for reacting Euler flow in a slightly perturbed flat nozzle."""
__version__ = "0.1.0"
