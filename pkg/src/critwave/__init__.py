"""Numerical lab for radially symmetric equivariant critical wave maps."""
from .geometry import TargetGeometry, check_assumptions, from_json, make_builtin, parse_custom
from .harmonic_map import HarmonicMapProfile, solve_Q
from .fields import FieldState, RadialGrid
from .evolution import EvolutionConfig, RunRecord, classify, evolve

__all__ = [
    "TargetGeometry", "check_assumptions", "from_json", "make_builtin", "parse_custom",
    "HarmonicMapProfile", "solve_Q", "FieldState", "RadialGrid",
    "EvolutionConfig", "RunRecord", "classify", "evolve",
]
