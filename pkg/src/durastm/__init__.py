"""durastm: a desk-scale laboratory for durable software transactional memory.

The package models a durable STM algorithm (a TML variant with a persistent
undo log) over simulated non-volatile memory, the durable TMS2 reference
automaton, a brute-force durable-opacity oracle, refinement and simulation
checkers, and an interleaving-and-crash-injecting explorer that drives them.
"""
from __future__ import annotations

__version__ = "0.1.0"
