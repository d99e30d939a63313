"""Simulator and verifier toolkit for certified randomness from a single
quantum device, built on LWE with trapdoor and lossy matrices."""

from .samplers import ParameterSet, session_rng

__all__ = ["ParameterSet", "session_rng"]
__version__ = "0.1.0"
