"""Quantitative Fatou experiments on rough boundaries.

Scenes, Christ-David style dyadic grids, Whitney regions, walk-on-spheres
harmonic measure, dyadic oscillation counting, stopping-time coronas and
approximants, with a command line runner in :mod:`qfatou.cli`.
"""
__version__ = "0.1.0"
