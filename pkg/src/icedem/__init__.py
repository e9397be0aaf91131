"""Discrete-element simulation of sintering, creep and fracture in ice and snow."""

__version__ = "0.1.0"
