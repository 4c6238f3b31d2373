"""Discrete laboratory for su(2) gauge pairs, flows, frequency functions and
Z/2-harmonic 1-forms on flat periodic lattices."""

__version__ = "0.1.0"

from ._backend import COMPILED  # noqa: F401
