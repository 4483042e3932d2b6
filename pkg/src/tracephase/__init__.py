"""Trace-coordinate dynamics, phase Hessians and oscillatory integral asymptotics."""

__version__ = "0.1.0"
