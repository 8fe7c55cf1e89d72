"""Robustness workbench for small hybrid quantum-classical classifiers.

Simulates parameterized circuits exactly (statevector and density matrix),
trains hybrid models, and runs poisoning/evasion attacks and an annealed
reweighting defense under configurable gate noise.
"""

from . import attacks, bench, datasets, defense, encoding, models, sim, training

__all__ = [
    "attacks",
    "bench",
    "datasets",
    "defense",
    "encoding",
    "models",
    "sim",
    "training",
]

__version__ = "0.1.0"
