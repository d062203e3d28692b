"""Graph-parameter hierarchies over tracial and commutative moment problems.

Vertex-variable hierarchies (stability and coloring side), their commutative
Lasserre counterparts, the theta-type order-1 bounds and their strengthenings,
the color/index-labeled feasibility hierarchies with integer search, and the
graph-product reductions tying the two families together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import conic
from .conic import FlatnessMode, SdpSolution, SolveStatus
from .graphs import Graph, all_cliques, cartesian_product, greedy_stable_set, star_product
from .momentize import (
    LinearConstraint,
    Relation,
    SdpProblem,
    VariableIndex,
    assemble,
    ideal_constraints,
    moment_block,
)
from .ncwords import (
    EquivalenceMode,
    IDENTITY,
    NcPolynomial,
    RewriteSystem,
    enumerate_basis,
    vertex,
)


class Strengthening(Enum):
    NONE = "none"
    THETA_PLUS = "theta-plus"
    XI_SDP = "xi-sdp"


@dataclass
class GraphBoundResult:
    parameter: str
    graph: Graph
    r: int
    value: float
    solution: Optional[SdpSolution] = None
    flatness: Optional[conic.FlatnessReport] = None
    anchor: str = ""
    diagnostics: dict = field(default_factory=dict)


class BracketError(RuntimeError):
    """Numerical bracket inversion in an integer parameter search."""


def _vertex_rewrites(g: Graph, commutative: bool = False) -> tuple:
    syms = [vertex(i) for i in range(g.n)]
    zero = set()
    for (i, j) in g.edges:
        zero.add((vertex(i), vertex(j)))
        zero.add((vertex(j), vertex(i)))
    rw = RewriteSystem(
        zero_pairs=frozenset(zero),
        idempotents=frozenset(syms),
        commutative=commutative,
    )
    return syms, rw


def _mode(commutative: bool) -> EquivalenceMode:
    # Sorted commutative monomials are already canonical, so the plain mode
    # is exact there; the noncommutative layer merges tracial classes.
    return EquivalenceMode.PLAIN if commutative else EquivalenceMode.TRACIAL_SYMMETRIC


def build_stab_problem(g: Graph, r: int, commutative: bool = False) -> SdpProblem:
    syms, rw = _vertex_rewrites(g, commutative)
    mode = _mode(commutative)
    index = VariableIndex(syms, 2 * r, rw, mode)
    rows = enumerate_basis(syms, r, rw, EquivalenceMode.PLAIN)
    block = moment_block(rows, rw, mode, index)
    objective = {}
    for i in range(g.n):
        vid = index.var_of((vertex(i),))
        objective[vid] = objective.get(vid, 0.0) + 1.0
    cons = [LinearConstraint({0: 1.0}, 1.0, Relation.EQ)]
    return assemble(
        objective, "max", [block], cons, index,
        description=f"stab hierarchy level {r}", r=r,
        metadata={"commutative": commutative},
    )


def build_col_problem(
    g: Graph,
    r: int,
    strengthening: Strengthening = Strengthening.NONE,
    commutative: bool = False,
) -> SdpProblem:
    syms, rw = _vertex_rewrites(g, commutative)
    mode = _mode(commutative)
    index = VariableIndex(syms, 2 * r, rw, mode)
    rows = enumerate_basis(syms, r, rw, EquivalenceMode.PLAIN)
    block = moment_block(rows, rw, mode, index)
    cons = [
        LinearConstraint({index.var_of((vertex(i),)): 1.0}, 1.0, Relation.EQ)
        for i in range(g.n)
    ]
    if strengthening != Strengthening.NONE:
        cons += _nonnegative_pair_constraints(g, index)
    if strengthening == Strengthening.XI_SDP:
        cons += _clique_constraints(g, index)
    return assemble(
        {0: 1.0}, "min", [block], cons, index,
        description=f"col hierarchy level {r} ({strengthening.value})", r=r,
        metadata={"commutative": commutative},
    )


def _pair_var(index: VariableIndex, i: int, j: int):
    return index.var_of((vertex(i), vertex(j)))


def _nonnegative_pair_constraints(g: Graph, index: VariableIndex) -> list:
    out = []
    for i in range(g.n):
        for j in range(i + 1, g.n):
            vid = _pair_var(index, i, j)
            if vid is not None:
                out.append(LinearConstraint({vid: 1.0}, 0.0, Relation.GE))
    return out


def _poly_form(poly: NcPolynomial, index: VariableIndex) -> dict:
    terms: dict = {}
    for w, c in poly.terms.items():
        vid = index.var_of(w)
        if vid is None:
            continue
        c2 = terms.get(vid, 0.0) + c
        if c2 == 0:
            terms.pop(vid, None)
        else:
            terms[vid] = c2
    return terms


def _clique_constraints(g: Graph, index: VariableIndex) -> list:
    """Clique inequalities L(x_i g_C) >= 0 and L(g_C g_C') >= 0.

    Here g_C = 1 - sum_{j in C} x_j over all cliques C.  With L(x_i) = 1
    these are the clique sum bounds on pair moments; emitting them in the
    reduced polynomial form drops the rows that rewrite to nothing (which
    would otherwise have identically-zero slack).
    """
    cliques = all_cliques(g).cliques
    gpolys = []
    for C in cliques:
        h = NcPolynomial.one()
        for j in sorted(C):
            h = h - NcPolynomial.from_word((vertex(j),))
        gpolys.append(h)
    out = []
    for h in gpolys:
        for i in range(g.n):
            form = _poly_form(NcPolynomial.from_word((vertex(i),)) * h, index)
            if form:
                out.append(LinearConstraint(form, 0.0, Relation.GE))
    for a in range(len(gpolys)):
        for b in range(a + 1, len(gpolys)):
            form = _poly_form(gpolys[a] * gpolys[b], index)
            if form:
                out.append(LinearConstraint(form, 0.0, Relation.GE))
    return out


def _solved(problem: SdpProblem, tol: float) -> SdpSolution:
    sol = conic.solve(problem, tol=tol)
    if sol.status not in (SolveStatus.OPTIMAL, SolveStatus.NUMERICAL_LIMIT):
        raise conic.SolverError(
            f"{problem.description}: solver returned {sol.status.value}"
        )
    if sol.status == SolveStatus.NUMERICAL_LIMIT and max(
        sol.residuals.get("lmi", 1.0),
        sol.residuals.get("adjoint", 1.0),
        sol.residuals.get("gap", 1.0),
    ) > 1e-5:
        raise conic.SolverError(f"{problem.description}: poor numerical accuracy")
    return sol


def xi_stab(g: Graph, r: int, tol: float = 1e-8) -> GraphBoundResult:
    """Tracial stability-side bound; order 1 is the theta number."""
    sol = _solved(build_stab_problem(g, r), tol)
    rep = conic.flatness(sol, r, FlatnessMode.GRAPH)
    return GraphBoundResult(
        "xi-stab", g, r, sol.objective, sol, rep,
        anchor="upper bound chain toward the projective packing value",
    )


def xi_col(
    g: Graph,
    r: int,
    strengthening: Strengthening = Strengthening.NONE,
    tol: float = 1e-8,
) -> GraphBoundResult:
    """Tracial coloring-side bound; order 1 is theta of the complement."""
    sol = _solved(build_col_problem(g, r, strengthening), tol)
    rep = conic.flatness(sol, r, FlatnessMode.GRAPH)
    name = {
        Strengthening.NONE: "xi-col",
        Strengthening.THETA_PLUS: "theta-plus",
        Strengthening.XI_SDP: "xi-sdp",
    }[strengthening]
    return GraphBoundResult(
        name, g, r, sol.objective, sol, rep,
        anchor="lower bound chain toward the tracial rank",
    )


def theta(g: Graph, tol: float = 1e-8) -> GraphBoundResult:
    res = xi_stab(g, 1, tol)
    res.parameter = "theta"
    return res


def lasserre_stab(g: Graph, r: int, tol: float = 1e-8) -> GraphBoundResult:
    sol = _solved(build_stab_problem(g, r, commutative=True), tol)
    rep = conic.flatness(sol, r, FlatnessMode.GRAPH)
    return GraphBoundResult("las-stab", g, r, sol.objective, sol, rep,
                            anchor="commutative relaxation of the stability number")


def lasserre_col(g: Graph, r: int, tol: float = 1e-8) -> GraphBoundResult:
    sol = _solved(build_col_problem(g, r, commutative=True), tol)
    rep = conic.flatness(sol, r, FlatnessMode.GRAPH)
    return GraphBoundResult("las-col", g, r, sol.objective, sol, rep,
                            anchor="commutative relaxation of the chromatic side")


# ---------------------------------------------------------------------------
# Color/index-labeled feasibility hierarchies with integer search
# ---------------------------------------------------------------------------


def _col_system(g: Graph, k: int, r: int):
    """Moment system over {x_i^c}: color sums to one, edge/color orthogonality."""
    syms = [vertex(i, c) for i in range(g.n) for c in range(k)]
    zero = set()
    for i in range(g.n):
        for c in range(k):
            for cp in range(k):
                if c != cp:
                    zero.add((vertex(i, c), vertex(i, cp)))
    for (i, j) in g.edges:
        for c in range(k):
            zero.add((vertex(i, c), vertex(j, c)))
            zero.add((vertex(j, c), vertex(i, c)))
    rw = RewriteSystem(zero_pairs=frozenset(zero), idempotents=frozenset(syms))
    index = VariableIndex(syms, 2 * r, rw, EquivalenceMode.TRACIAL_SYMMETRIC)
    rows = enumerate_basis(syms, r, rw, EquivalenceMode.PLAIN)
    block = moment_block(rows, rw, EquivalenceMode.TRACIAL_SYMMETRIC, index)
    gens = []
    for i in range(g.n):
        h = NcPolynomial.one()
        for c in range(k):
            h = h - NcPolynomial.from_word((vertex(i, c),))
        gens.append(h)
    cons = ideal_constraints(gens, 2 * r, rw, EquivalenceMode.TRACIAL_SYMMETRIC,
                             index, syms)
    cons.append(LinearConstraint({0: 1.0}, 1.0, Relation.EQ))
    return assemble({}, "min", [block], cons, index,
                    description=f"coloring system k={k} level {r}", r=r)


def _stab_system(g: Graph, k: int, r: int):
    """Moment system over {x_c^i}: index sums to one, vertex consistency."""
    syms = [vertex(i, c) for c in range(k) for i in range(g.n)]
    zero = set()
    for c in range(k):
        for i in range(g.n):
            for j in range(g.n):
                if i != j:
                    zero.add((vertex(i, c), vertex(j, c)))
    for c in range(k):
        for cp in range(k):
            if c == cp:
                continue
            for i in range(g.n):
                zero.add((vertex(i, c), vertex(i, cp)))
            for (i, j) in g.edges:
                zero.add((vertex(i, c), vertex(j, cp)))
                zero.add((vertex(j, c), vertex(i, cp)))
    rw = RewriteSystem(zero_pairs=frozenset(zero), idempotents=frozenset(syms))
    index = VariableIndex(syms, 2 * r, rw, EquivalenceMode.TRACIAL_SYMMETRIC)
    rows = enumerate_basis(syms, r, rw, EquivalenceMode.PLAIN)
    block = moment_block(rows, rw, EquivalenceMode.TRACIAL_SYMMETRIC, index)
    gens = []
    for c in range(k):
        h = NcPolynomial.one()
        for i in range(g.n):
            h = h - NcPolynomial.from_word((vertex(i, c),))
        gens.append(h)
    cons = ideal_constraints(gens, 2 * r, rw, EquivalenceMode.TRACIAL_SYMMETRIC,
                             index, syms)
    cons.append(LinearConstraint({0: 1.0}, 1.0, Relation.EQ))
    return assemble({}, "min", [block], cons, index,
                    description=f"stability system k={k} level {r}", r=r)


def col_system_feasible(g: Graph, k: int, r: int, eps_feas: float = 1e-6):
    return conic.feasibility(_col_system(g, k, r), eps_feas=eps_feas)


def stab_system_feasible(g: Graph, k: int, r: int, eps_feas: float = 1e-6):
    return conic.feasibility(_stab_system(g, k, r), eps_feas=eps_feas)


def gamma_col(
    g: Graph, r: int, eps_feas: float = 1e-6, cross_check: bool = False
) -> GraphBoundResult:
    """Smallest color count whose level-r moment system is feasible.

    The search is bracketed below by the order-1 coloring bound and above by
    the vertex count; feasibility is monotone in k (witness embedding), so a
    binary search applies.
    """
    base = xi_col(g, 1)
    lo = max(1, math.ceil(base.value - 1e-6))
    hi = g.n
    if lo > hi:
        raise BracketError(f"bracket inversion: lo={lo} > hi={hi}")
    margins = {}
    feas_hi, m_hi = col_system_feasible(g, hi, r, eps_feas)
    margins[hi] = m_hi
    if not feas_hi:
        raise BracketError(
            f"coloring system infeasible at k=n={hi} (margin {m_hi:.3e})"
        )
    while lo < hi:
        mid = (lo + hi) // 2
        feas, m = col_system_feasible(g, mid, r, eps_feas)
        margins[mid] = m
        if feas:
            hi = mid
        else:
            lo = mid + 1
    result = GraphBoundResult(
        "gamma-col", g, r, float(lo),
        anchor="lower bound on the commuting quantum chromatic number",
        diagnostics={"margins": margins, "bracket_lo": math.ceil(base.value - 1e-6)},
    )
    if cross_check:
        via = gamma_col_via_product(g, r)
        result.diagnostics["product_route"] = via
        if via != lo:
            raise BracketError(
                f"product-route disagreement: direct {lo} vs product {via}"
            )
    return result


def gamma_stab(
    g: Graph, r: int, eps_feas: float = 1e-6, cross_check: bool = False
) -> GraphBoundResult:
    """Largest index count whose level-r moment system is feasible."""
    lo = max(1, len(greedy_stable_set(g)))
    hi = int(math.floor(xi_stab(g, 1).value + 1e-6))
    if hi < lo:
        raise BracketError(f"bracket inversion: hi={hi} < lo={lo}")
    margins = {}
    feas_lo, m_lo = stab_system_feasible(g, lo, r, eps_feas)
    margins[lo] = m_lo
    if not feas_lo:
        raise BracketError(
            f"stability system infeasible at greedy bracket k={lo} "
            f"(margin {m_lo:.3e})"
        )
    while lo < hi:
        mid = (lo + hi + 1) // 2
        feas, m = stab_system_feasible(g, mid, r, eps_feas)
        margins[mid] = m
        if feas:
            lo = mid
        else:
            hi = mid - 1
    result = GraphBoundResult(
        "gamma-stab", g, r, float(lo),
        anchor="upper bound on the commuting quantum stability number",
        diagnostics={"margins": margins},
    )
    if cross_check:
        via = gamma_stab_via_product(g, r)
        result.diagnostics["product_route"] = via
        if via != lo:
            raise BracketError(
                f"product-route disagreement: direct {lo} vs product {via}"
            )
    return result


def gamma_col_via_product(g: Graph, r: int, threshold: float = 1e-5) -> int:
    """Smallest k with xi_stab(G box K_k, r) reaching |V| (within threshold)."""
    for k in range(1, g.n + 1):
        val = xi_stab(cartesian_product(g, k), r).value
        if val >= g.n - threshold:
            return k
    raise BracketError("product reduction found no k up to n")


def gamma_stab_via_product(g: Graph, r: int, threshold: float = 1e-5) -> int:
    """Largest k with xi_stab(K_k star G, r) staying at k (within threshold)."""
    hi = int(math.floor(xi_stab(g, 1).value + 1e-6))
    best = None
    for k in range(1, hi + 1):
        val = xi_stab(star_product(k, g), r).value
        if val >= k - threshold:
            best = k
        else:
            break
    if best is None:
        raise BracketError("product reduction failed at k=1")
    return best


def Lambda(g: Graph, r: int, threshold: float = 1e-5) -> GraphBoundResult:
    """Commutative product reduction: smallest k with las_stab(G box K_k) = |V|."""
    for k in range(1, g.n + 1):
        val = lasserre_stab(cartesian_product(g, k), r).value
        if val >= g.n - threshold:
            return GraphBoundResult(
                "lambda", g, r, float(k),
                anchor="classical chromatic lower bound via product stability",
            )
    raise BracketError("no k up to n reached the vertex count")


def product_identity_check(g: Graph, r: int, vertex_transitive: bool = False) -> dict:
    """Check xi_stab * xi_col >= |V|, with equality for vertex-transitive G."""
    a = xi_stab(g, r)
    b = xi_col(g, r)
    product = a.value * b.value
    report = {
        "xi_stab": a.value,
        "xi_col": b.value,
        "product": product,
        "n": g.n,
        "lower_ok": product >= g.n - 1e-3,
        "vertex_transitive": vertex_transitive,
    }
    if vertex_transitive:
        report["equality_ok"] = abs(product - g.n) <= 1e-3
    violations = []
    if not report["lower_ok"]:
        violations.append(f"product {product:.6f} below |V|={g.n}")
    if vertex_transitive and not report["equality_ok"]:
        violations.append(f"product {product:.6f} differs from |V|={g.n}")
    report["violations"] = violations
    return report


def hierarchy_comparison(g: Graph, r: int) -> dict:
    """Check the refinement inequalities between the two hierarchy families."""
    xc = xi_col(g, r).value
    xs = xi_stab(g, r).value
    gc = gamma_col(g, r).value
    gs = gamma_stab(g, r).value
    report = {
        "xi_col": xc,
        "gamma_col": gc,
        "xi_stab": xs,
        "gamma_stab": gs,
        "col_ok": xc <= gc + 1e-4,
        "stab_ok": xs >= gs - 1e-4,
    }
    violations = []
    if not report["col_ok"]:
        violations.append(f"xi_col {xc:.6f} exceeds gamma_col {gc}")
    if not report["stab_ok"]:
        violations.append(f"xi_stab {xs:.6f} below gamma_stab {gs}")
    report["violations"] = violations
    return report
