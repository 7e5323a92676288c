"""Configuration management for SemiStatic."""

import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Mapping


def _default_threads() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class Config:
    """Solver and verification configuration."""

    # Linear programming
    lp_tolerance: float = 1e-9
    lp_max_iterations: int = 20000
    max_vertex_dim: int = 12
    interior_threshold: float = 1e-10

    # Newton path
    newton_tolerance: float = 1e-10
    newton_decrement_tolerance: float = 1e-12
    newton_max_iterations: int = 200
    gradient_fallback_iterations: int = 5000
    armijo_alpha: float = 0.01
    armijo_beta: float = 0.5

    # Verification
    q_tolerance: float = 1e-6
    bisection_width: float = 1e-6
    bisection_max_iterations: int = 60
    divergence_utility_gain: float = 3.0
    divergence_position_threshold: float = 100.0
    divergence_m_threshold: float = 100.0
    noise_floor: float = 1e-9

    # Execution
    threads: int = field(default_factory=_default_threads)
    random_seed: int = 20240601

    @classmethod
    def from_env(cls) -> 'Config':
        """Create configuration from environment variables."""
        defaults = cls()
        return cls(
            lp_tolerance=float(os.getenv('SEMISTATIC_LP_TOLERANCE', defaults.lp_tolerance)),
            max_vertex_dim=int(os.getenv('SEMISTATIC_MAX_VERTEX_DIM', defaults.max_vertex_dim)),
            newton_max_iterations=int(os.getenv('SEMISTATIC_NEWTON_MAX_ITERATIONS', defaults.newton_max_iterations)),
            threads=int(os.getenv('SEMISTATIC_THREADS', defaults.threads)),
            random_seed=int(os.getenv('SEMISTATIC_SEED', defaults.random_seed)),
        )

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'Config':
        """Return a copy with the named fields replaced.

        Values given as strings are coerced to the field's type.
        """
        known = {f.name: f for f in fields(self)}
        changes: Dict[str, Any] = {}
        for name, value in overrides.items():
            if name not in known:
                raise ValueError(f"Unknown configuration field: {name}")
            target = type(getattr(self, name))
            try:
                changes[name] = target(value)
            except (TypeError, ValueError) as e:
                raise ValueError(f"Invalid value for {name}: {value!r}") from e
        return replace(self, **changes)

    def q_tolerance_at(self, m: float) -> float:
        """Scale-aware tolerance for classifying a position as zero."""
        return self.q_tolerance * (1.0 + m)


DEFAULT_CONFIG = Config()


def resolve_config(config: 'Config | None') -> Config:
    return DEFAULT_CONFIG if config is None else config
