"""Correlation generation with known provenance, synchronous-correlation Gram
constructions, and classical membership testing by linear programming."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .entdim import Correlation, CorrelationError, Scenario


class ValidationError(ValueError):
    pass


class ResourceError(RuntimeError):
    pass


@dataclass
class Realization:
    """Shared state plus local measurement families in local dimension d.

    ``psi`` lives in the d^2-dimensional tensor space (row-major pairing);
    ``E`` has shape (nS, nA, d, d) and ``F`` shape (nT, nB, d, d).
    """

    d: int
    psi: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def scenario(self) -> Scenario:
        return Scenario(self.E.shape[1], self.F.shape[1],
                        self.E.shape[0], self.F.shape[0])

    def validate(self):
        if abs(np.linalg.norm(self.psi) - 1.0) > 1e-12:
            raise ValidationError(
                f"state norm is {np.linalg.norm(self.psi):.15f}, not 1"
            )
        for name, povms in (("E", self.E), ("F", self.F)):
            for q in range(povms.shape[0]):
                total = np.zeros((self.d, self.d), dtype=complex)
                for a in range(povms.shape[1]):
                    m = povms[q, a]
                    if np.abs(m - m.conj().T).max() > 1e-10:
                        raise ValidationError(f"{name}[{q}][{a}] is not Hermitian")
                    if np.linalg.eigvalsh(m)[0] < -1e-10:
                        raise ValidationError(
                            f"{name}[{q}][{a}] has eigenvalue "
                            f"{np.linalg.eigvalsh(m)[0]:.3e} < 0"
                        )
                    total += m
                if np.abs(total - np.eye(self.d)).max() > 1e-10:
                    raise ValidationError(
                        f"{name}[{q}] does not sum to the identity"
                    )

    def to_json(self) -> str:
        def cplx(arr):
            a = np.asarray(arr, dtype=complex)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return json.dumps(
            {"d": self.d, "psi": cplx(self.psi),
             "E": cplx(self.E), "F": cplx(self.F)},
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Realization":
        obj = json.loads(text)

        def decplx(x):
            a = np.array(x, dtype=float)
            return a[..., 0] + 1j * a[..., 1]

        return Realization(
            int(obj["d"]), decplx(obj["psi"]), decplx(obj["E"]), decplx(obj["F"])
        )


def realize(real: Realization) -> Correlation:
    """Correlation table of a realization; records the dimension bound d^2."""
    real.validate()
    sc = real.scenario()
    table = np.zeros((sc.nA, sc.nB, sc.nS, sc.nT))
    for s in range(sc.nS):
        for t in range(sc.nT):
            for a in range(sc.nA):
                for b in range(sc.nB):
                    op = np.kron(real.E[s, a], real.F[t, b])
                    table[a, b, s, t] = float(
                        np.real(real.psi.conj() @ (op @ real.psi))
                    )
    corr = Correlation(sc, table)
    corr.dq_upper = real.d ** 2
    return corr


def _random_povm(n_outcomes: int, d: int, rng) -> np.ndarray:
    gs = []
    for _ in range(n_outcomes):
        w = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        gs.append(w @ w.conj().T + 1e-6 * np.eye(d))
    total = sum(gs)
    vals, vecs = np.linalg.eigh(total)
    tinv_half = vecs @ np.diag(vals ** -0.5) @ vecs.conj().T
    return np.array([tinv_half @ g @ tinv_half for g in gs])


def random_realization(scenario: Scenario, d: int, seed: int) -> Realization:
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=d * d) + 1j * rng.normal(size=d * d)
    psi /= np.linalg.norm(psi)
    E = np.array([_random_povm(scenario.nA, d, rng) for _ in range(scenario.nS)])
    F = np.array([_random_povm(scenario.nB, d, rng) for _ in range(scenario.nT)])
    return Realization(d, psi, E, F)


def tsirelson_chsh() -> Realization:
    """Maximally entangled two-qubit strategy with optimally rotated
    binary measurements; its game functional value is the quantum maximum."""
    Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
    X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    psi = np.zeros(4, dtype=complex)
    psi[0] = psi[3] = 1.0 / np.sqrt(2.0)
    eye = np.eye(2, dtype=complex)
    A = [Z, X]
    B = [(Z + X) / np.sqrt(2.0), (Z - X) / np.sqrt(2.0)]
    E = np.array([[(eye + (-1) ** a * A[s]) / 2 for a in range(2)] for s in range(2)])
    F = np.array([[(eye + (-1) ** b * B[t]) / 2 for b in range(2)] for t in range(2)])
    return Realization(2, psi, E, F)


def chsh_game_value(P: Correlation) -> float:
    """Winning probability of the xor game with uniform questions."""
    sc = P.scenario
    if (sc.nA, sc.nB, sc.nS, sc.nT) != (2, 2, 2, 2):
        raise ValueError("the xor game needs the (2,2,2,2) scenario")
    v = 0.0
    for s in range(2):
        for t in range(2):
            for a in range(2):
                for b in range(2):
                    if (a + b) % 2 == (s * t) % 2:
                        v += P.table[a, b, s, t]
    return v / 4.0


def pr_box() -> Correlation:
    sc = Scenario(2, 2, 2, 2)
    table = np.zeros((2, 2, 2, 2))
    for s in range(2):
        for t in range(2):
            for a in range(2):
                for b in range(2):
                    if (a + b) % 2 == (s * t) % 2:
                        table[a, b, s, t] = 0.5
    return Correlation(sc, table)


def deterministic_correlation(scenario: Scenario, g, h) -> Correlation:
    """Strategy pair g: S -> A, h: T -> B as a correlation table."""
    table = np.zeros((scenario.nA, scenario.nB, scenario.nS, scenario.nT))
    for s in range(scenario.nS):
        for t in range(scenario.nT):
            table[g[s], h[t], s, t] = 1.0
    return Correlation(scenario, table)


def random_classical(scenario: Scenario, n_atoms: int, seed: int) -> Correlation:
    """Convex combination of random deterministic strategies."""
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(n_atoms))
    table = np.zeros((scenario.nA, scenario.nB, scenario.nS, scenario.nT))
    for k in range(n_atoms):
        g = rng.integers(0, scenario.nA, scenario.nS)
        h = rng.integers(0, scenario.nB, scenario.nT)
        table += w[k] * deterministic_correlation(scenario, g, h).table
    return Correlation(scenario, table)


# ---------------------------------------------------------------------------
# Synchronous correlations and their Gram matrices
# ---------------------------------------------------------------------------


def random_projector_family(nS: int, nA: int, d: int, seed: int) -> np.ndarray:
    """Projector measurement families: for every question a random unitary
    splits the standard basis into nA groups (possibly empty)."""
    rng = np.random.default_rng(seed)
    fam = np.zeros((nS, nA, d, d), dtype=complex)
    for s in range(nS):
        w = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        u, _ = np.linalg.qr(w)
        labels = rng.integers(0, nA, d)
        for a in range(nA):
            diag = np.diag((labels == a).astype(float))
            fam[s, a] = u @ diag @ u.conj().T
    return fam


def _check_projector_family(fam: np.ndarray):
    nS, nA, d, _ = fam.shape
    for s in range(nS):
        total = np.zeros((d, d), dtype=complex)
        for a in range(nA):
            m = fam[s, a]
            if np.abs(m - m.conj().T).max() > 1e-10:
                raise ValidationError(f"projector [{s}][{a}] is not Hermitian")
            if np.abs(m @ m - m).max() > 1e-10:
                raise ValidationError(f"[{s}][{a}] is not idempotent")
            total += m
        if np.abs(total - np.eye(d)).max() > 1e-10:
            raise ValidationError(f"family [{s}] does not sum to the identity")


def synchronous_from_projectors(fam: np.ndarray, d: int) -> Correlation:
    """Synchronous table P(a,b|s,t) = Tr(X_s^a X_t^b)/d."""
    _check_projector_family(fam)
    nS, nA = fam.shape[0], fam.shape[1]
    table = np.zeros((nA, nA, nS, nS))
    for s in range(nS):
        for t in range(nS):
            for a in range(nA):
                for b in range(nA):
                    table[a, b, s, t] = float(
                        np.real(np.trace(fam[s, a] @ fam[t, b]))
                    ) / d
    return Correlation(Scenario(nA, nA, nS, nS), table)


@dataclass
class CpsdGram:
    """Gram matrix of a synchronous correlation, indexed by (question, answer).

    When the correlation was produced from an explicit family, ``factors``
    holds PSD matrices with pairwise inner products equal to the Gram entries
    and ``K`` their common row sum.
    """

    matrix: np.ndarray
    nS: int
    nA: int
    factors: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))[0])


def _sync_check(P: Correlation):
    sc = P.scenario
    if sc.nA != sc.nB or sc.nS != sc.nT:
        raise ValidationError("a synchronous correlation needs A=B and S=T")
    for s in range(sc.nS):
        for a in range(sc.nA):
            for b in range(sc.nA):
                if a != b and P.table[a, b, s, s] > 1e-10:
                    raise ValidationError(
                        f"synchronity violated: P({a},{b}|{s},{s}) = "
                        f"{P.table[a, b, s, s]:.3e}"
                    )


def gram_of_synchronous(P: Correlation) -> CpsdGram:
    """Arrange a synchronous table as its (S x A)-indexed Gram matrix."""
    _sync_check(P)
    sc = P.scenario
    n = sc.nS * sc.nA
    M = np.zeros((n, n))
    for s in range(sc.nS):
        for a in range(sc.nA):
            for t in range(sc.nS):
                for b in range(sc.nA):
                    M[s * sc.nA + a, t * sc.nA + b] = P.table[a, b, s, t]
    return CpsdGram(M, sc.nS, sc.nA)


def cpsd_gram_from_projectors(fam: np.ndarray, d: int) -> CpsdGram:
    """Gram data of the synchronous correlation of a projector family.

    The recorded factors are the projectors scaled by 1/sqrt(d), so their
    plain Frobenius inner products reproduce the table entries.
    """
    _check_projector_family(fam)
    factors = fam / np.sqrt(d)
    nS, nA = fam.shape[0], fam.shape[1]
    n = nS * nA
    M = np.zeros((n, n))
    for s in range(nS):
        for a in range(nA):
            for t in range(nS):
                for b in range(nA):
                    M[s * nA + a, t * nA + b] = float(
                        np.real(np.trace(factors[s, a].conj().T @ factors[t, b]))
                    )
    K = factors[0].sum(axis=0)
    return CpsdGram(M, nS, nA, factors=factors, K=K)


def factorize(gram: CpsdGram) -> np.ndarray:
    """PSD factors of the Gram matrix.

    Only recorded factorizations are returned; producing one from the matrix
    alone amounts to computing a completely positive semidefinite
    factorization, which this package does not attempt.
    """
    if gram.factors is None:
        raise ValidationError(
            "no factorization recorded with this Gram matrix; build it from "
            "an explicit projector family"
        )
    return gram.factors


def gram_to_realization(factors: np.ndarray) -> Realization:
    """Realization from PSD factors with a common invertible row sum.

    The state is the flattened row sum K, the first party measures
    K^{-1/2} X K^{-1/2}, and the second party the transposes (the transpose
    pairs with the row-major flattening of K).
    """
    nS, nA, d, _ = factors.shape
    Ks = factors.sum(axis=1)
    K = Ks[0]
    spread = max(np.abs(Ks[s] - K).max() for s in range(nS)) if nS else 0.0
    if spread > 1e-8:
        raise ValidationError(
            f"factor row sums differ across questions by {spread:.3e}"
        )
    vals, vecs = np.linalg.eigh(K)
    if vals[0] <= 1e-8:
        raise ValidationError(
            f"row-sum matrix is numerically singular (smallest eigenvalue "
            f"{vals[0]:.3e}); a minimal factorization is required"
        )
    inv_half = vecs @ np.diag(vals ** -0.5) @ vecs.conj().T
    E = np.zeros((nS, nA, d, d), dtype=complex)
    for s in range(nS):
        for a in range(nA):
            E[s, a] = inv_half @ factors[s, a] @ inv_half
    F = np.transpose(E, (0, 1, 3, 2))
    psi = K.reshape(-1)
    psi = psi / np.linalg.norm(psi)
    return Realization(d, psi, E, F)


# ---------------------------------------------------------------------------
# Classical membership by linear programming
# ---------------------------------------------------------------------------


class Verdict(Enum):
    CLASSICAL = "classical"
    NONCLASSICAL = "nonclassical"


@dataclass
class ClassicalityCertificate:
    verdict: Verdict
    weights: Optional[dict] = None  # (g, h) strategy -> weight
    functional: Optional[np.ndarray] = None  # separating coefficients over Gamma
    margin: float = 0.0


def _strategy_vector(scenario: Scenario, g, h) -> np.ndarray:
    return deterministic_correlation(scenario, g, h).table.reshape(-1)


def _all_strategies(scenario: Scenario):
    for g in itertools.product(range(scenario.nA), repeat=scenario.nS):
        for h in itertools.product(range(scenario.nB), repeat=scenario.nT):
            yield g, h


def _best_strategy(scenario: Scenario, c: np.ndarray):
    """Deterministic strategy maximizing <c, P_strategy>.

    Enumerates the second party's strategies and optimizes the first party's
    answers separately per question.
    """
    ct = c.reshape(scenario.nA, scenario.nB, scenario.nS, scenario.nT)
    best_val, best = -np.inf, None
    for h in itertools.product(range(scenario.nB), repeat=scenario.nT):
        sel = np.array([ct[:, h[t], :, t] for t in range(scenario.nT)])
        per_sa = sel.sum(axis=0)  # (nA, nS)
        g = per_sa.argmax(axis=0)
        val = per_sa.max(axis=0).sum()
        if val > best_val:
            best_val, best = val, (tuple(int(x) for x in g), h)
    return best, float(best_val)


def _margin_lp(P: np.ndarray, columns: list):
    """max <c,P> - theta  s.t.  <c,P_k> <= theta, -1 <= c <= 1."""
    dim = P.size
    nk = len(columns)
    c_obj = np.concatenate([-P, [1.0]])
    A_ub = np.zeros((nk, dim + 1))
    for k, col in enumerate(columns):
        A_ub[k, :dim] = col
        A_ub[k, dim] = -1.0
    bounds = [(-1.0, 1.0)] * dim + [(None, None)]
    res = linprog(c_obj, A_ub=A_ub, b_ub=np.zeros(nk), bounds=bounds,
                  method="highs")
    if not res.success:
        raise RuntimeError(f"margin LP failed: {res.message}")
    return -res.fun, res.x[:dim]


def _weights_lp(P: np.ndarray, columns: list):
    dim = P.size
    nk = len(columns)
    A_eq = np.zeros((dim + 1, nk))
    for k, col in enumerate(columns):
        A_eq[:dim, k] = col
    A_eq[dim, :] = 1.0
    b_eq = np.concatenate([P, [1.0]])
    res = linprog(np.zeros(nk), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0.0, None)] * nk, method="highs")
    if not res.success:
        return None
    return res.x


def classical_membership(
    P: Correlation,
    strategy_cap: int = 10_000_000,
    direct_cap: int = 100_000,
    tol: float = 1e-9,
) -> ClassicalityCertificate:
    """Decide membership in the polytope of shared-randomness correlations.

    Small scenarios enumerate every deterministic strategy; larger ones use
    column generation with an exact pricing oracle over the smaller party.
    """
    sc = P.scenario
    n_strat = sc.nA ** sc.nS * sc.nB ** sc.nT
    if n_strat > strategy_cap:
        raise ResourceError(
            f"{n_strat} deterministic strategies exceed the cap "
            f"{strategy_cap}; reduce the scenario"
        )
    p_vec = P.table.reshape(-1)

    if n_strat <= direct_cap:
        strategies = list(_all_strategies(sc))
        columns = [_strategy_vector(sc, g, h) for g, h in strategies]
        margin, c = _margin_lp(p_vec, columns)
        if margin > tol:
            return ClassicalityCertificate(
                Verdict.NONCLASSICAL,
                functional=c.reshape(P.table.shape),
                margin=float(margin),
            )
        w = _weights_lp(p_vec, columns)
        if w is None:
            raise RuntimeError("weights LP failed on an in-polytope table")
        weights = {
            strategies[k]: float(w[k]) for k in range(len(w)) if w[k] > 1e-12
        }
        return ClassicalityCertificate(Verdict.CLASSICAL, weights=weights,
                                       margin=float(margin))

    if sc.nB ** sc.nT > direct_cap:
        raise ResourceError(
            "column generation needs the second party's strategy count "
            f"within {direct_cap}; reduce the scenario"
        )
    # Column generation on the margin LP with an exact oracle.
    rng = np.random.default_rng(0)
    strategies = []
    for _ in range(16):
        g = tuple(int(x) for x in rng.integers(0, sc.nA, sc.nS))
        h = tuple(int(x) for x in rng.integers(0, sc.nB, sc.nT))
        strategies.append((g, h))
    strategies = list(dict.fromkeys(strategies))
    for _ in range(10_000):
        columns = [_strategy_vector(sc, g, h) for g, h in strategies]
        margin, c = _margin_lp(p_vec, columns)
        (gh, best_val) = _best_strategy(sc, c)
        theta = max(float(col @ c) for col in columns)
        if best_val > theta + 1e-12 and gh not in strategies:
            strategies.append(gh)
            continue
        if margin > tol:
            return ClassicalityCertificate(
                Verdict.NONCLASSICAL,
                functional=c.reshape(P.table.shape),
                margin=float(margin),
            )
        w = _weights_lp(p_vec, columns)
        if w is not None:
            weights = {
                strategies[k]: float(w[k]) for k in range(len(w)) if w[k] > 1e-12
            }
            return ClassicalityCertificate(Verdict.CLASSICAL, weights=weights,
                                           margin=float(margin))
        # The restricted hull misses the table: price in the most violated
        # column against the current infeasibility direction.
        resid = p_vec - sum(
            wk * col for wk, col in zip(_project_weights(p_vec, columns), columns)
        )
        gh, _ = _best_strategy(sc, resid)
        if gh in strategies:
            raise RuntimeError("column generation stalled")
        strategies.append(gh)
    raise RuntimeError("column generation did not converge")


def _project_weights(p_vec: np.ndarray, columns: list) -> np.ndarray:
    A = np.stack(columns, axis=1)
    w, *_ = np.linalg.lstsq(A, p_vec, rcond=None)
    return np.clip(w, 0.0, None)
