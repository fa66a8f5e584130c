"""Schrodinger equation with Aharonov-Bohm and inverse-square potentials.

Kernel series, the magnetic oscillator eigenbasis and two independent
propagators for the Aharonov-Bohm and inverse-square models.
"""

__version__ = "0.1.0"
