"""Tracial moment SDP hierarchies for entanglement dimension bounds and
quantum graph parameters."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    conic,
    corrlab,
    entdim,
    graphs,
    momentize,
    ncwords,
    qgraph,
    witness,
)
