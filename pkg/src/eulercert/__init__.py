"""Galerkin solver and a posteriori existence certificate for the self-similar
Euler boundary-value problem on annular domains."""
from __future__ import annotations

__version__ = "0.1.0"
