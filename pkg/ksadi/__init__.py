"""**ksadi**

Positivity-preserving, mass-conserving ADI solvers for the 2D parabolic-parabolic
Keller-Segel system, with the experiments that check them.
"""
from ksadi._version import __version__
