"""Concrete SDP solving, post-solve numerics, and SDPA sparse file exchange.

The embedded solve path is the interior-point method in :mod:`ncmoment._ipm`.
Inequalities are implemented as 1x1 PSD blocks so the core solver only sees a
single cone type.  Post-solve utilities compute numerical ranks of nested
principal submatrices of the realized moment matrix and the flatness verdicts
used for finite-convergence certificates.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from ._ipm import BlockData, ConeProgram, solve_ipm
from .momentize import CompiledBlock, Relation, SdpProblem

DEFAULT_TOL = 1e-8
DEFAULT_EPS_FEAS = 1e-6
DEFAULT_TAU_RANK = 1e-6


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_LIMIT = "numerical_limit"


class SolverError(RuntimeError):
    pass


@dataclass
class SdpSolution:
    status: SolveStatus
    objective: float
    y: np.ndarray  # moment variable values L(w)
    moment_matrix: Optional[np.ndarray]
    moment_degrees: Optional[np.ndarray]
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    certificate: Optional[dict] = None
    problem: Optional[SdpProblem] = None

    def value_of(self, vid: int) -> float:
        return float(self.y[vid])


@dataclass
class FlatnessReport:
    r: int
    ranks: list  # rank(M_s(L)) for s = 0..r
    tau_rank: float
    flat_deltas: list  # all delta >= 1 with rank(M_{r-delta}) == rank(M_r)
    entdim_delta: int
    entdim_flat: bool

    @property
    def flat(self) -> bool:
        return bool(self.flat_deltas)

    def summary(self) -> dict:
        return {
            "r": self.r,
            "ranks": self.ranks,
            "tau_rank": self.tau_rank,
            "flat_deltas": self.flat_deltas,
            "entdim_delta": self.entdim_delta,
            "entdim_flat": self.entdim_flat,
        }


class FlatnessMode(Enum):
    GRAPH = "graph"
    ENTDIM = "entdim"


def _full_entries(block: CompiledBlock):
    """Expand upper-triangle occurrence arrays to both triangles."""
    off = block.rows != block.cols
    vids = np.concatenate([block.var_ids, block.var_ids[off]])
    rows = np.concatenate([block.rows, block.cols[off]])
    cols = np.concatenate([block.cols, block.rows[off]])
    vals = np.concatenate([block.coefs, block.coefs[off]])
    return vids, rows, cols, vals


def _build_cone_program(
    problem: SdpProblem, objective_cap: Optional[float] = None
) -> Tuple[ConeProgram, float, np.ndarray, list]:
    """Translate an LMI-form problem into the solver's internal data.

    Returns (program, sign, c, dropped_eq_rows); the solver maximizes
    sign * (original objective).
    """
    n = problem.num_vars
    c = np.zeros(n)
    for vid, coef in problem.objective.items():
        c[vid] += coef
    sign = 1.0 if problem.sense == "max" else -1.0

    blocks = []
    covered = np.zeros(n, dtype=bool)
    for blk in problem.blocks:
        vids, rows, cols, vals = _full_entries(blk)
        covered[vids] = True
        blocks.append(
            BlockData(blk.size, np.zeros((blk.size, blk.size)), vids, rows, cols, vals)
        )
    for con in problem.ge_constraints:
        items = sorted(con.terms.items())
        vids = np.array([v for v, _ in items], dtype=np.int64)
        vals = np.array([cf for _, cf in items], dtype=float)
        covered[vids] = True
        z = np.zeros(len(items), dtype=np.int64)
        blocks.append(BlockData(1, np.array([[-con.rhs]]), vids, z, z, vals))
    if objective_cap is not None:
        # Optional numerical aid: bound the objective form from above.
        vids = np.nonzero(c)[0]
        blocks.append(
            BlockData(
                1,
                np.array([[objective_cap]]),
                vids,
                np.zeros(len(vids), dtype=np.int64),
                np.zeros(len(vids), dtype=np.int64),
                -c[vids],
            )
        )

    referenced = np.zeros(n, dtype=bool)
    referenced[np.nonzero(c)[0]] = True
    for con in problem.constraints:
        for vid in con.terms:
            referenced[vid] = True
    bad = np.nonzero(referenced & ~covered)[0]
    if bad.size:
        raise SolverError(
            f"variables {bad[:5].tolist()} appear in constraints/objective "
            "but in no PSD block; the problem is not in solvable LMI form"
        )

    eqs = problem.eq_constraints
    if eqs:
        A = np.zeros((len(eqs), n))
        d = np.zeros(len(eqs))
        for i, con in enumerate(eqs):
            for vid, coef in con.terms.items():
                A[i, vid] = coef
            d[i] = con.rhs
    else:
        A, d = None, None
    prog = ConeProgram(n, sign * c, blocks, A, d).finalize()
    return prog, sign, c, []


def solve(
    problem: SdpProblem,
    tol: float = DEFAULT_TOL,
    objective_cap: Optional[float] = None,
    max_iter: int = 120,
    verbose: bool = False,
    solver: Optional[str] = None,
) -> SdpSolution:
    """Solve an assembled moment SDP.

    The path is chosen by ``solver`` or the NCMOMENT_SOLVER environment
    variable: "embedded" (default) runs the in-process interior-point method
    directly; "sdpa-file" round-trips the problem through the SDPA sparse
    format first and solves the re-imported instance.
    """
    if not (0 < tol <= 1e-2):
        raise ValueError("tol must lie in (0, 1e-2]")
    path = solver or os.environ.get("NCMOMENT_SOLVER", "embedded")
    if path not in ("embedded", "sdpa-file"):
        raise ValueError(f"unknown solver path '{path}'")
    if path == "sdpa-file":
        return _solve_via_sdpa_file(problem, tol, max_iter)
    prog, sign, c, _ = _build_cone_program(problem, objective_cap)
    res = solve_ipm(prog, tol=tol, max_iter=max_iter, verbose=verbose)
    status = {
        "optimal": SolveStatus.OPTIMAL,
        "infeasible": SolveStatus.INFEASIBLE,
        "unbounded": SolveStatus.UNBOUNDED,
        "numerical_limit": SolveStatus.NUMERICAL_LIMIT,
    }[res.status]
    y = res.y
    mi = problem.moment_block_index()
    mom = problem.blocks[mi].materialize(y) if status != SolveStatus.INFEASIBLE else None
    return SdpSolution(
        status=status,
        objective=float(sign * res.pobj),
        y=y,
        moment_matrix=mom,
        moment_degrees=problem.blocks[mi].row_degrees,
        iterations=res.iterations,
        residuals={
            "lmi": res.err_lmi,
            "adjoint": res.err_adj,
            "equality": res.err_eq,
            "gap": abs(res.pobj - res.dobj) / (1 + abs(res.pobj) + abs(res.dobj)),
            "dual_objective": float(sign * res.dobj),
        },
        certificate=res.certificate,
        problem=problem,
    )


def feasibility(
    problem: SdpProblem,
    eps_feas: float = DEFAULT_EPS_FEAS,
    tol: float = DEFAULT_TOL,
    max_iter: int = 120,
) -> Tuple[bool, float]:
    """Decide feasibility via the margin program max { t : blocks >= t*I }.

    The input must have no objective.  Feasible iff the optimal margin is
    >= -eps_feas; the margin is returned alongside.  The equality constraints
    must pin the normalization (e.g. L(1) = 1), otherwise the margin program
    is unbounded.
    """
    if problem.objective:
        raise ValueError("feasibility expects a problem without objective")
    prog, _, _, _ = _build_cone_program(problem)
    t = problem.num_vars  # margin variable gets the next id
    for blk in prog.blocks:
        sz = blk.size
        blk.vids = np.concatenate([blk.vids, np.full(sz, t, dtype=np.int64)])
        blk.rows = np.concatenate([blk.rows, np.arange(sz)])
        blk.cols = np.concatenate([blk.cols, np.arange(sz)])
        blk.vals = np.concatenate([blk.vals, -np.ones(sz)])
    obj = np.zeros(t + 1)
    obj[t] = 1.0
    prog.nvars = t + 1
    prog.objective = obj
    if prog.A is not None:
        prog.A = np.hstack([prog.A, np.zeros((prog.A.shape[0], 1))])
    prog.finalize()
    res = solve_ipm(prog, tol=tol, max_iter=max_iter)
    if res.status == "unbounded":
        return True, math.inf
    if res.status == "infeasible":
        return False, -math.inf
    if res.status not in ("optimal", "numerical_limit"):
        raise SolverError(f"margin program ended with status {res.status}")
    if res.status == "numerical_limit" and max(
        res.err_lmi, res.err_adj, res.err_eq
    ) > 1e-4:
        raise SolverError("margin program did not reach acceptable accuracy")
    margin = float(res.y[t])
    return margin >= -eps_feas, margin


def numerical_rank(matrix: np.ndarray, tau_rank: float = DEFAULT_TAU_RANK) -> int:
    """Number of singular values above tau_rank times the largest one."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0
    sv = np.linalg.svd(matrix, compute_uv=False)
    top = sv.max(initial=0.0)
    if top == 0.0:
        return 0
    return int((sv > tau_rank * top).sum())


def flatness_from_matrix(
    M: np.ndarray,
    degrees: np.ndarray,
    r: int,
    mode: FlatnessMode = FlatnessMode.GRAPH,
    tau_rank: float = DEFAULT_TAU_RANK,
) -> FlatnessReport:
    """Rank profile of the nested principal submatrices M_s, s = 0..r.

    ``degrees`` gives the word degree of each row of M (rows must be sorted
    by degree, identity first).
    """
    degrees = np.asarray(degrees)
    ranks = []
    for s in range(r + 1):
        k = int((degrees <= s).sum())
        ranks.append(numerical_rank(M[:k, :k], tau_rank))
    flat_deltas = [delta for delta in range(1, r + 1) if ranks[r - delta] == ranks[r]]
    entdim_delta = math.ceil(r / 3) + 1
    entdim_flat = (
        r - entdim_delta >= 0 and ranks[r - entdim_delta] == ranks[r]
    )
    if mode == FlatnessMode.GRAPH:
        pass  # any delta >= 1 in flat_deltas certifies flatness
    return FlatnessReport(r, ranks, tau_rank, flat_deltas, entdim_delta, entdim_flat)


def flatness(
    solution: SdpSolution,
    r: int,
    mode: FlatnessMode = FlatnessMode.GRAPH,
    tau_rank: float = DEFAULT_TAU_RANK,
) -> FlatnessReport:
    """Flatness report of a solved instance's realized moment matrix."""
    if solution.moment_matrix is None:
        raise ValueError("solution carries no realized moment matrix")
    return flatness_from_matrix(
        solution.moment_matrix, solution.moment_degrees, r, mode, tau_rank
    )


# --------------------------------------------------------------------------
# SDPA sparse exchange format (".dat-s")
#
# The file stores the problem
#     minimize <F_0, Y>  subject to  <F_i, Y> = c_i (i = 1..m),  Y PSD,
# with Y sharing this problem's block structure plus one trailing diagonal
# block holding inequality slacks.  Layout: line 1 = m, line 2 = number of
# blocks, line 3 = block sizes (negative = diagonal), line 4 = the m values
# c_i, then entry lines "matno blkno i j value" (1-based, upper triangle,
# ascending order).  Maximization problems are exported with the objective
# negated; the file always encodes a minimization.
# --------------------------------------------------------------------------


class SdpaFormatError(ValueError):
    pass


def _entry_forms(problem: SdpProblem):
    """Map (block, i, j) upper-triangle positions to their linear forms."""
    forms = {}
    for b, blk in enumerate(problem.blocks):
        for vid, i, j, cf in zip(blk.var_ids, blk.rows, blk.cols, blk.coefs):
            forms.setdefault((b, int(i), int(j)), []).append((int(vid), float(cf)))
    return forms


def _representatives(problem: SdpProblem, forms):
    reps = {}
    for pos in sorted(forms):
        form = forms[pos]
        if len(form) == 1 and form[0][1] == 1.0:
            reps.setdefault(form[0][0], pos)
    missing = [v for v in range(problem.num_vars) if v not in reps]
    live = set()
    for form in forms.values():
        for v, _ in form:
            live.add(v)
    for con in problem.constraints:
        live.update(con.terms)
    live.update(problem.objective)
    missing = [v for v in missing if v in live]
    if missing:
        raise SdpaFormatError(
            f"variables {missing[:5]} have no unit-coefficient block entry; "
            "cannot export in entry form"
        )
    return reps


def _entry_coeff(i: int, j: int) -> float:
    # <A, X> with A the symmetric unit matrix at (i, j) picks X_ij when the
    # off-diagonal value is 1/2.
    return 1.0 if i == j else 0.5


def export_sdpa(problem: SdpProblem) -> bytes:
    """Serialize the SDP in SDPA sparse form via entry identification.

    Every moment variable is pinned to a representative matrix entry; all
    other occurrences, forced-zero entries, and the linear constraints become
    equality rows on the PSD matrix Y.
    """
    forms = _entry_forms(problem)
    reps = _representatives(problem, forms)
    sizes = [blk.size for blk in problem.blocks]
    nslack = len(problem.ge_constraints)
    slack_block = len(sizes)  # appended diagonal block, if needed
    if nslack:
        sizes.append(-nslack)

    rows = []  # each row: (entries list [(blk, i, j, coef)], rhs)
    for b, blk in enumerate(problem.blocks):
        stored = {(b, int(i), int(j)) for i, j in zip(blk.rows, blk.cols)}
        for i in range(blk.size):
            for j in range(i, blk.size):
                pos = (b, i, j)
                if pos not in stored:
                    rows.append(([(b, i, j, _entry_coeff(i, j))], 0.0))
                    continue
                form = forms[pos]
                if len(form) == 1 and form[0][1] == 1.0 and reps[form[0][0]] == pos:
                    continue
                ent = [(b, i, j, _entry_coeff(i, j))]
                for v, cf in form:
                    rb, ri, rj = reps[v]
                    ent.append((rb, ri, rj, -cf * _entry_coeff(ri, rj)))
                rows.append((ent, 0.0))
    for con in problem.eq_constraints:
        ent = []
        for v, cf in sorted(con.terms.items()):
            rb, ri, rj = reps[v]
            ent.append((rb, ri, rj, cf * _entry_coeff(ri, rj)))
        rows.append((ent, con.rhs))
    for k, con in enumerate(problem.ge_constraints):
        ent = []
        for v, cf in sorted(con.terms.items()):
            rb, ri, rj = reps[v]
            ent.append((rb, ri, rj, cf * _entry_coeff(ri, rj)))
        ent.append((slack_block, k, k, -1.0))
        rows.append((ent, con.rhs))

    sign = 1.0 if problem.sense == "min" else -1.0
    cobj = {}
    for v, cf in sorted(problem.objective.items()):
        rb, ri, rj = reps[v]
        key = (rb, ri, rj)
        cobj[key] = cobj.get(key, 0.0) + sign * cf * _entry_coeff(ri, rj)

    lines = [
        f"{len(rows)}",
        f"{len(sizes)}",
        " ".join(str(s) for s in sizes),
        " ".join(_fmt(rhs) for _, rhs in rows),
    ]
    entry_lines = []
    for (b, i, j), v in sorted(cobj.items()):
        if v != 0.0:
            entry_lines.append((0, b + 1, i + 1, j + 1, v))
    for matno, (ent, _) in enumerate(rows, start=1):
        merged = {}
        for b, i, j, v in ent:
            merged[(b, i, j)] = merged.get((b, i, j), 0.0) + v
        for (b, i, j), v in sorted(merged.items()):
            if v != 0.0:
                entry_lines.append((matno, b + 1, i + 1, j + 1, v))
    entry_lines.sort(key=lambda t: t[:4])
    for matno, b, i, j, v in entry_lines:
        lines.append(f"{matno} {b} {i} {j} {_fmt(v)}")
    return ("\n".join(lines) + "\n").encode()


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class SdpaProblem:
    """Parsed SDPA file: blocks of Y, equality rows, objective over entries."""

    m: int
    block_sizes: list  # positive = dense, negative = diagonal
    rhs: np.ndarray
    objective_entries: list  # (blk, i, j, value) 0-based
    constraint_entries: list  # list per constraint of (blk, i, j, value)


def parse_sdpa(data: bytes) -> SdpaProblem:
    text = data.decode()
    lines = text.splitlines()

    def fail(lineno, msg):
        raise SdpaFormatError(f"line {lineno}: {msg}")

    if len(lines) < 4:
        fail(len(lines) + 1, "truncated file")
    try:
        m = int(lines[0].split()[0])
    except (ValueError, IndexError):
        fail(1, "expected the number of constraints")
    try:
        nblocks = int(lines[1].split()[0])
    except (ValueError, IndexError):
        fail(2, "expected the number of blocks")
    sizes = lines[2].split()
    if len(sizes) != nblocks:
        fail(3, f"expected {nblocks} block sizes, found {len(sizes)}")
    try:
        sizes = [int(s) for s in sizes]
    except ValueError:
        fail(3, "block sizes must be integers")
    rhs_tokens = lines[3].split()
    if len(rhs_tokens) != m:
        fail(4, f"expected {m} objective coefficients, found {len(rhs_tokens)}")
    try:
        rhs = np.array([float(t) for t in rhs_tokens])
    except ValueError:
        fail(4, "objective coefficients must be numbers")

    obj_entries = []
    cons = [[] for _ in range(m)]
    for lineno, line in enumerate(lines[4:], start=5):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            fail(lineno, "entry lines need 'matno blkno i j value'")
        try:
            matno, blk, i, j = (int(p) for p in parts[:4])
            val = float(parts[4])
        except ValueError:
            fail(lineno, "malformed entry line")
        if not (0 <= matno <= m):
            fail(lineno, f"matrix number {matno} out of range 0..{m}")
        if not (1 <= blk <= nblocks):
            fail(lineno, f"block number {blk} out of range 1..{nblocks}")
        sz = abs(sizes[blk - 1])
        if not (1 <= i <= j <= sz):
            fail(lineno, f"indices ({i},{j}) not in the upper triangle of size {sz}")
        if sizes[blk - 1] < 0 and i != j:
            fail(lineno, "off-diagonal entry in a diagonal block")
        rec = (blk - 1, i - 1, j - 1, val)
        if matno == 0:
            obj_entries.append(rec)
        else:
            cons[matno - 1].append(rec)
    return SdpaProblem(m, sizes, rhs, obj_entries, cons)


def sdpa_to_problem(parsed: SdpaProblem) -> SdpProblem:
    """Rebuild an LMI-form problem whose variables are the matrix entries."""
    from .momentize import LinearConstraint, SymbolicBlock, assemble

    blocks = []
    slots = {}

    def add_block(label, size, diagonal):
        b = len(blocks)
        entries = {}
        if diagonal:
            for i in range(size):
                vid = len(slots)
                slots[(b, i, i)] = vid
                entries[(i, i)] = [(vid, 1.0)]
        else:
            for i in range(size):
                for j in range(i, size):
                    vid = len(slots)
                    slots[(b, i, j)] = vid
                    entries[(i, j)] = [(vid, 1.0)]
        blocks.append(SymbolicBlock(label, [(i,) for i in range(size)], entries))

    for bi, sz in enumerate(parsed.block_sizes):
        add_block("moment" if bi == 0 else f"block{bi}", abs(sz), sz < 0)

    def form_of(entries):
        terms = {}
        for b, i, j, v in entries:
            vid = slots[(b, i, j)]
            coef = v if i == j else 2.0 * v
            terms[vid] = terms.get(vid, 0.0) + coef
        return terms

    constraints = [
        LinearConstraint(form_of(ent), float(parsed.rhs[k]), Relation.EQ)
        for k, ent in enumerate(parsed.constraint_entries)
    ]

    class _SlotIndex:
        def __init__(self, nv):
            self.words = list(range(nv))

        def __len__(self):
            return len(self.words)

    return assemble(
        objective=form_of(parsed.objective_entries),
        sense="min",
        blocks=blocks,
        constraints=constraints,
        index=_SlotIndex(len(slots)),
        description="imported sdpa problem",
    )


def import_sdpa(data: bytes) -> SdpProblem:
    return sdpa_to_problem(parse_sdpa(data))


def import_solution_sdpa(data: bytes, tol: float = DEFAULT_TOL) -> SdpSolution:
    """Parse an SDPA problem file, solve it, and return the solution."""
    return solve(import_sdpa(data), tol=tol, solver="embedded")


def _solve_via_sdpa_file(problem: SdpProblem, tol: float,
                         max_iter: int) -> SdpSolution:
    """Exchange-format solve path: export, re-import, solve, map back.

    The file always encodes a minimization over matrix entries; the moment
    values are read back off the representative entries, so the returned
    solution matches the embedded path's conventions.
    """
    forms = _entry_forms(problem)
    reps = _representatives(problem, forms)
    data = export_sdpa(problem)
    fsol = import_solution_sdpa(data, tol=tol)
    mats = [blk.materialize(fsol.y) for blk in fsol.problem.blocks]
    y = np.zeros(problem.num_vars)
    for vid, (b, i, j) in reps.items():
        y[vid] = mats[b][i, j]
    sign = 1.0 if problem.sense == "min" else -1.0
    mi = problem.moment_block_index()
    mom = problem.blocks[mi].materialize(y)
    return SdpSolution(
        status=fsol.status,
        objective=float(sign * fsol.objective),
        y=y,
        moment_matrix=mom,
        moment_degrees=problem.blocks[mi].row_degrees,
        iterations=fsol.iterations,
        residuals=dict(fsol.residuals, path="sdpa-file"),
        certificate=fsol.certificate,
        problem=problem,
    )
