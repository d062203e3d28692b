"""Symbolic moment and localizing matrices, truncated-ideal constraints,
and their assembly into a concrete block-diagonal SDP.

The SDP is stored in linear-matrix-inequality form over the moment variables
L(w): each block is a symmetric matrix whose entries are linear forms in the
variables, together with linear equality/inequality constraints.  Variables
are indexed by canonical reduced words of degree at most 2r.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .ncwords import (
    EquivalenceMode,
    IDENTITY,
    NcPolynomial,
    RewriteSystem,
    Symbol,
    Word,
    canonical_reduced,
    enumerate_basis,
    involution,
    reduce_word,
    word_str,
)


class InternalConsistencyError(RuntimeError):
    """A word outside the variable index was encountered during assembly."""


class VariableIndex:
    """Bijection between canonical reduced words (degree <= 2r) and variable ids.

    Id 0 is reserved for the identity word, i.e. the moment L(1).  Words whose
    equivalence class collapses to zero under the rewrite system have no id.
    """

    def __init__(
        self,
        symbols: Iterable[Symbol],
        two_r: int,
        rw: RewriteSystem,
        mode: EquivalenceMode = EquivalenceMode.TRACIAL_SYMMETRIC,
        cap: int = 200_000,
    ):
        self.rw = rw
        self.mode = mode
        self.two_r = two_r
        self.words = enumerate_basis(symbols, two_r, rw, mode, cap=cap)
        self.id_of = {w: k for k, w in enumerate(self.words)}
        assert self.words[0] == IDENTITY

    def __len__(self) -> int:
        return len(self.words)

    def var_of(self, word: Word) -> Optional[int]:
        """Variable id of the class of ``word``; None when the class is zero."""
        w = canonical_reduced(word, self.rw, self.mode)
        if w is None:
            return None
        try:
            return self.id_of[w]
        except KeyError:
            raise InternalConsistencyError(
                f"word {word_str(w)} (degree {len(w)}) missing from the "
                f"degree-{self.two_r} variable index"
            ) from None


class Relation(Enum):
    EQ = "eq"
    GE = "ge"


@dataclass
class LinearConstraint:
    """Sparse linear form over variable ids, compared against ``rhs``."""

    terms: dict
    rhs: float
    relation: Relation = Relation.EQ

    def key(self):
        items = sorted((v, round(c, 12)) for v, c in self.terms.items())
        if self.relation == Relation.EQ and items and items[0][1] < 0:
            items = [(v, -c) for v, c in items]
            rhs = -self.rhs
        else:
            rhs = self.rhs
        return (self.relation, tuple(items), round(rhs, 12))


def _combine(terms: dict, vid: Optional[int], coeff: float):
    if vid is None or coeff == 0:
        return
    c = terms.get(vid, 0.0) + coeff
    if c == 0:
        terms.pop(vid, None)
    else:
        terms[vid] = c


@dataclass
class SymbolicBlock:
    """Symmetric matrix of linear forms L(u* g v) over a word basis.

    ``entries`` maps upper-triangle positions (i, j), i <= j, to a list of
    (variable id, coefficient) pairs; positions whose form is identically zero
    are absent.
    """

    label: str
    row_words: list
    entries: dict

    @property
    def size(self) -> int:
        return len(self.row_words)

    def dense_forms(self):
        """Iterate (i, j, var_id, coeff) over the stored upper triangle."""
        for (i, j), form in self.entries.items():
            for vid, c in form:
                yield i, j, vid, c


def moment_block(
    basis_r: Sequence[Word],
    rw: RewriteSystem,
    mode: EquivalenceMode,
    index: VariableIndex,
) -> SymbolicBlock:
    """Moment matrix with entry (u, v) = L(u* v)."""
    entries = {}
    for i, u in enumerate(basis_r):
        ustar = involution(u)
        for j in range(i, len(basis_r)):
            vid = index.var_of(ustar + basis_r[j])
            if vid is not None:
                entries[(i, j)] = [(vid, 1.0)]
    if not entries or entries.get((0, 0)) != [(0, 1.0)]:
        raise InternalConsistencyError("moment block (1,1) entry must be L(1)")
    return SymbolicBlock("moment", list(basis_r), entries)


def localizing_block(
    g: NcPolynomial,
    r: int,
    rw: RewriteSystem,
    mode: EquivalenceMode,
    index: VariableIndex,
    symbols: Iterable[Symbol],
    label: Optional[str] = None,
) -> SymbolicBlock:
    """Localizing matrix for a symmetric generator g.

    Rows and columns are indexed by words of degree at most r - ceil(deg(g)/2);
    entry (u, v) is the linear form of L(u* g v).
    """
    g = g.reduced(rw)
    if not g.is_symmetric(rw):
        raise ValueError(f"generator {g} is not symmetric after reduction")
    d = r - (g.deg + 1) // 2
    rows = enumerate_basis(symbols, max(d, 0), rw, EquivalenceMode.PLAIN)
    entries = {}
    for i, u in enumerate(rows):
        ustar = involution(u)
        for j in range(i, len(rows)):
            form: dict = {}
            for w, c in g.terms.items():
                _combine(form, index.var_of(ustar + w + rows[j]), c)
            if form:
                entries[(i, j)] = sorted(form.items())
    return SymbolicBlock(label or f"loc[{g}]", rows, entries)


def ideal_constraints(
    generators: Iterable[NcPolynomial],
    two_r: int,
    rw: RewriteSystem,
    mode: EquivalenceMode,
    index: VariableIndex,
    symbols: Iterable[Symbol],
) -> list:
    """Equality constraints L(p*h) = 0 over all reduced multipliers p.

    Right multipliers are implied by traciality, so one-sided products
    suffice.  Duplicates (after canonicalization of the full linear form)
    are removed.
    """
    gens = [g.reduced(rw) for g in generators]
    out = []
    seen = set()
    for h in gens:
        if h.is_zero():
            continue
        budget = two_r - h.deg
        if budget < 0:
            continue
        multipliers = enumerate_basis(symbols, budget, rw, EquivalenceMode.PLAIN)
        for p in multipliers:
            terms: dict = {}
            for w, c in h.terms.items():
                _combine(terms, index.var_of(p + w), c)
            if not terms:
                continue
            con = LinearConstraint(terms, 0.0, Relation.EQ)
            k = con.key()
            if k not in seen:
                seen.add(k)
                out.append(con)
    return out


def state_commutator_constraints(
    r: int,
    symbols: Iterable[Symbol],
    z: Symbol,
    rw: RewriteSystem,
    index: VariableIndex,
) -> list:
    """Equalities L(p z u z v z) = L(p z v z u z) for all word triples in budget.

    Pairs whose two sides canonicalize identically are skipped and the list is
    duplicate-free.  The multiplier p ranges over reduced words so that the
    full truncated ideal of the block-swap relations is covered.
    """
    budget = 2 * r - 3
    if budget < 0:
        return []
    words = enumerate_basis(symbols, budget, rw, EquivalenceMode.PLAIN)
    by_deg: dict = {}
    for w in words:
        by_deg.setdefault(len(w), []).append(w)
    out = []
    seen = set()
    max_deg = max(by_deg)
    for du in range(0, max_deg + 1):
        for dv in range(du, max_deg + 1 - du):
            for dp in range(0, budget - du - dv + 1):
                for u in by_deg.get(du, ()):
                    for v in by_deg.get(dv, ()):
                        if u >= v:
                            continue
                        for p in by_deg.get(dp, ()):
                            lhs = index.var_of(p + (z,) + u + (z,) + v + (z,))
                            rhs = index.var_of(p + (z,) + v + (z,) + u + (z,))
                            if lhs == rhs:
                                continue
                            terms: dict = {}
                            _combine(terms, lhs, 1.0)
                            _combine(terms, rhs, -1.0)
                            if not terms:
                                continue
                            con = LinearConstraint(terms, 0.0, Relation.EQ)
                            k = con.key()
                            if k not in seen:
                                seen.add(k)
                                out.append(con)
    return out


@dataclass
class CompiledBlock:
    """A symbolic block instantiated to per-variable sparse coefficient data.

    The block matrix is B(y) = sum_k coefs[k] * y[var_ids[k]] * E(rows[k], cols[k])
    with E(i, j) the symmetric unit matrix; arrays cover the upper triangle.
    """

    label: str
    size: int
    row_words: list
    row_degrees: np.ndarray
    var_ids: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    coefs: np.ndarray

    def materialize(self, y: np.ndarray) -> np.ndarray:
        m = np.zeros((self.size, self.size))
        np.add.at(m, (self.rows, self.cols), self.coefs * y[self.var_ids])
        low = np.tril(m.T, -1)
        return m + low


@dataclass
class SdpProblem:
    """Concrete SDP over moment variables.

    minimize/maximize  sum_k objective[k] * y[k]
    subject to         every compiled block is PSD,
                       the EQ constraints hold, the GE constraints hold.
    """

    objective: dict
    sense: str  # "min" or "max"
    blocks: list
    constraints: list
    num_vars: int
    index: Optional[VariableIndex] = None
    description: str = ""
    r: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def eq_constraints(self):
        return [c for c in self.constraints if c.relation == Relation.EQ]

    @property
    def ge_constraints(self):
        return [c for c in self.constraints if c.relation == Relation.GE]

    def moment_block_index(self) -> int:
        for k, b in enumerate(self.blocks):
            if b.label == "moment":
                return k
        return 0

    def constraint_residuals(self, y: np.ndarray):
        eq = [sum(c * y[v] for v, c in con.terms.items()) - con.rhs
              for con in self.eq_constraints]
        ge = [sum(c * y[v] for v, c in con.terms.items()) - con.rhs
              for con in self.ge_constraints]
        return np.array(eq), np.array(ge)


def _trim_zero_rows(block: SymbolicBlock) -> SymbolicBlock:
    live = set()
    for (i, j) in block.entries:
        live.add(i)
        live.add(j)
    if len(live) == block.size:
        return block
    keep = sorted(live)
    remap = {old: new for new, old in enumerate(keep)}
    entries = {(remap[i], remap[j]): v for (i, j), v in block.entries.items()}
    return SymbolicBlock(block.label, [block.row_words[i] for i in keep], entries)


def assemble(
    objective: dict,
    sense: str,
    blocks: Sequence[SymbolicBlock],
    constraints: Sequence[LinearConstraint],
    index: VariableIndex,
    description: str = "",
    r: int = 0,
    metadata: Optional[dict] = None,
) -> SdpProblem:
    """Compile symbolic blocks and constraints into a solver-ready problem.

    Identically-zero rows/columns (index words reduced to zero) are dropped,
    duplicate constraints removed, and per-variable sparse coefficient arrays
    built for every block.
    """
    if not blocks:
        raise ValueError("an SDP needs at least one PSD block")
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    nv = len(index)
    for vid in objective:
        if not (0 <= vid < nv):
            raise ValueError(f"objective references unindexed variable {vid}")

    compiled = []
    used = np.zeros(nv, dtype=bool)
    for blk in blocks:
        blk = _trim_zero_rows(blk)
        vids, rows, cols, coefs = [], [], [], []
        for i, j, vid, c in blk.dense_forms():
            vids.append(vid)
            rows.append(i)
            cols.append(j)
            coefs.append(c)
            used[vid] = True
        order = np.lexsort((np.array(cols), np.array(rows)))
        compiled.append(
            CompiledBlock(
                label=blk.label,
                size=blk.size,
                row_words=blk.row_words,
                row_degrees=np.array([len(w) for w in blk.row_words]),
                var_ids=np.array(vids, dtype=np.int64)[order],
                rows=np.array(rows, dtype=np.int64)[order],
                cols=np.array(cols, dtype=np.int64)[order],
                coefs=np.array(coefs, dtype=float)[order],
            )
        )

    dedup, seen = [], set()
    for con in constraints:
        if not con.terms:
            continue
        for vid in con.terms:
            if not (0 <= vid < nv):
                raise ValueError(f"constraint references unindexed variable {vid}")
            used[vid] = True
        k = con.key()
        if k not in seen:
            seen.add(k)
            dedup.append(con)

    meta = dict(metadata or {})
    meta.setdefault("block_sizes", [b.size for b in compiled])
    meta.setdefault("num_eq", sum(c.relation == Relation.EQ for c in dedup))
    meta.setdefault("num_ge", sum(c.relation == Relation.GE for c in dedup))
    meta.setdefault("num_vars_used", int(used.sum()))
    return SdpProblem(
        objective=dict(objective),
        sense=sense,
        blocks=compiled,
        constraints=dedup,
        num_vars=nv,
        index=index,
        description=description,
        r=r,
        metadata=meta,
    )
