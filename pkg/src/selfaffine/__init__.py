"""Multifractal spectra of self-affine measures: pressure roots, closed forms and empirical checks."""

__version__ = "0.1.0"
