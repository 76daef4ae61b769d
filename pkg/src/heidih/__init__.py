"""Simulator for the heat-modulated infinite-dimensional Heston (HEIDIH) forward-price model.

The volatility is the mild solution of a stochastic heat equation on the
half-line, approximated by linear finite elements with backward Euler and
driven by pointwise-sampled colored noise. The price solves a stochastic
advection equation on an equal-step space-time lattice. The experiments
package measures pointwise-in-space strong convergence rates by coupled
Monte Carlo.
"""

__version__ = "0.1.0"
