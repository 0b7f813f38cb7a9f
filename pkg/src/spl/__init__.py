"""Weighted p-Laplacian problems with singular nonlinearities.

Finite-element solvers for -div(w |grad u|^{p-2} grad u) = lambda f(u) u^{-q}
(one positive solution between a sub- and a super-solution) and for
-div(w |grad u|^{p-2} grad u) = lambda u^{-q} + u^r (two positive solutions,
a ball minimiser and a mountain-pass point).
"""

__version__ = "0.1.0"
