"""Propagation of singularities for hyperbolic SPDEs driven by one Brownian motion.

Symbols and their calculus, stochastic bicharacteristic flows, periodic-grid
quantization and SPDE solvers, numerical wave front sets, and a scenario
harness with an acceptance suite.
"""

__version__ = "0.1.0"
