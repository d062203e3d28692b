"""Explicit linear functionals from matrix assignments.

Trace evaluations at concrete matrix tuples satisfy every constraint of the
moment relaxations by construction; they serve as feasibility witnesses, as
independent oracles in tests, and as inputs to the flatness machinery.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .momentize import SdpProblem, VariableIndex
from .ncwords import Word, involution


def word_value(word: Word, assignment: dict, dim: int) -> complex:
    m = np.eye(dim, dtype=complex)
    for s in word:
        m = m @ assignment[s]
    return np.trace(m)


def trace_functional(
    atoms: Sequence,
    normalized: bool = False,
) -> Callable[[Word], float]:
    """Linear functional L(w) = sum_i weight_i * Re Tr(w(assignment_i)).

    ``atoms`` is a sequence of (weight, assignment) pairs where assignment
    maps each symbol to a square matrix.  With ``normalized`` the trace of
    each atom is divided by its dimension (a tracial state); without it the
    plain matrix trace is used.
    """
    dims = []
    for _, assignment in atoms:
        first = next(iter(assignment.values()))
        dims.append(first.shape[0])

    def L(word: Word) -> float:
        total = 0.0
        for (weight, assignment), d in zip(atoms, dims):
            v = word_value(word, assignment, d).real
            total += weight * (v / d if normalized else v)
        return total

    return L


def moment_matrix_from_functional(
    rows: Sequence[Word], L: Callable[[Word], float]
) -> np.ndarray:
    n = len(rows)
    M = np.zeros((n, n))
    for i, u in enumerate(rows):
        ustar = involution(u)
        for j in range(i, n):
            M[i, j] = M[j, i] = L(ustar + rows[j])
    return M


def vector_from_functional(
    index: VariableIndex, L: Callable[[Word], float]
) -> np.ndarray:
    """Values of L on every indexed variable word."""
    return np.array([L(w) for w in index.words])


def check_feasibility(
    problem: SdpProblem, y: np.ndarray
) -> dict:
    """Residuals of a candidate moment vector against an assembled problem.

    Returns the worst equality violation, worst inequality violation (negative
    slack), and the smallest eigenvalue over all PSD blocks.
    """
    eq, ge = problem.constraint_residuals(y)
    min_eig = np.inf
    for blk in problem.blocks:
        M = blk.materialize(y)
        w = np.linalg.eigvalsh(M)
        min_eig = min(min_eig, float(w[0]))
    return {
        "max_eq_violation": float(np.abs(eq).max(initial=0.0)),
        "min_ge_slack": float(ge.min(initial=np.inf)) if ge.size else np.inf,
        "min_block_eigenvalue": float(min_eig),
    }
