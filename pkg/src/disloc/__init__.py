"""Faults and interfaces in layered elastic media: forward solves, corner probes, reconstruction."""

__version__ = "0.1.0"
