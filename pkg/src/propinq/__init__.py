"""Numerical estimates for covariant propinquity between finite quantum metric systems.

Submodules import numpy lazily through this package so that the command
line entry point can cap BLAS threads before numpy loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "Interval": "interval",
    "DomainError": "errors",
    "ResourceError": "errors",
    "PropinqError": "errors",
    "FiniteMetricSpace": "metric_core",
    "gh_pointed": "metric_core",
    "parse_monoid": "monoid_metric",
    "upsilon": "monoid_metric",
    "mk_distance": "qcms",
    "FuzzyTorus": "fuzzy_torus",
    "lip_norm": "fuzzy_torus",
    "magnitude": "tunnels",
    "covariant_propinquity_upper": "tunnels",
    "fuzzy_bridge": "bridges",
    "bridge_length": "bridges",
    "tunnel_from_covariant_bridge": "bridges",
}


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = sorted(_EXPORTS)
