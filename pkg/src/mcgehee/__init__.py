"""McGehee blowup of electromagnetic Lagrangian systems at an equilibrium."""
from __future__ import annotations

__version__ = "0.1.0"
