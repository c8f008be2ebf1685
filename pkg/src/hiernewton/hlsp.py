"""Lexicographic least-squares with slack relaxation.

A hierarchy is an ordered list of levels. Every row ``a x + b`` of level ``l``
is tied to a slack ``w``: ``a x + b = w`` (EQUAL), ``a x + b <= w`` (UPPER) or
``a x + b >= w`` (LOWER). Level ``l`` minimises ``||w_l||^2`` while every row
of the levels above it stays at its recorded optimal slack. Inequality slacks
are one-sided, so a satisfied inequality contributes nothing.

Multipliers follow the Lagrangian

    L_l = 1/2 w_l'w_l + lam_ll'(w_l - A_l x - b_l) + sum_i<l lam_il'(w_i* - A_i x - b_i)

which gives ``lam_ll = -w_l`` and ``A_l' lam_ll + sum_i A_i' lam_il = 0``. With
this sign convention an active UPPER row has ``lam <= 0`` and an active LOWER
row ``lam >= 0``.

:func:`solve` is a primal active-set method that handles the levels in order,
and :func:`brute_force_oracle` enumerates every activity pattern of the
inequality rows for small problems.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.linalg.lapack import dgesdd as _gesdd
from scipy.optimize import lsq_linear

__all__ = [
    "Relation",
    "PriorityLevel",
    "Hierarchy",
    "HlspSolution",
    "SolverOptions",
    "KktReport",
    "HlspSolver",
    "DimensionMismatch",
    "IterationLimit",
    "TooLarge",
    "solve",
    "solve_equality",
    "brute_force_oracle",
    "check_kkt",
    "slack_of",
    "random_hierarchy",
    "dump_hierarchy",
    "read_hierarchy_dump",
]


class Relation(IntEnum):
    EQUAL = 0
    UPPER = 1  # a x + b <= w
    LOWER = 2  # a x + b >= w


class DimensionMismatch(ValueError):
    pass


class TooLarge(ValueError):
    pass


class IterationLimit(RuntimeError):
    """Raised only when ``SolverOptions.raise_on_limit`` is set."""

    def __init__(self, message, solution):
        super().__init__(message)
        self.solution = solution


# +1 for UPPER, -1 for LOWER, 0 for EQUAL: ``orient * r <= orient * w``
_ORIENT = np.array([0.0, 1.0, -1.0])
# plain ints for the hot loops; IntEnum attribute access is slow
_EQ, _UP, _LO = 0, 1, 2


@dataclass
class PriorityLevel:
    A: np.ndarray
    b: np.ndarray
    relations: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float)).reshape(-1)
        m = self.A.shape[0]
        if self.b.size != m:
            raise DimensionMismatch(
                f"level {self.name!r}: A has {m} rows but b has {self.b.size}")
        if self.relations is None:
            rel = np.zeros(m, dtype=int)
        else:
            rel = np.asarray(self.relations, dtype=int).reshape(-1)
            if rel.size == 1 and m != 1:
                rel = np.full(m, rel[0])
        if rel.size != m:
            raise DimensionMismatch(f"level {self.name!r}: {rel.size} relations for {m} rows")
        if np.any((rel < 0) | (rel > 2)):
            raise ValueError("relations must be EQUAL, UPPER or LOWER")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError(f"level {self.name!r} has non-finite entries")
        self.relations = rel

    @classmethod
    def trusted(cls, A, b, relations, name=""):
        """Build without validation, for rows assembled internally."""
        lvl = cls.__new__(cls)
        lvl.A, lvl.b, lvl.relations, lvl.name = A, b, relations, name
        return lvl

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def inequality(self) -> np.ndarray:
        return self.relations != Relation.EQUAL

    def residual(self, x):
        return self.A @ x + self.b


@dataclass
class Hierarchy:
    levels: list
    n: int | None = None

    def __post_init__(self):
        self.levels = list(self.levels)
        if self.n is None:
            if not self.levels:
                raise ValueError("cannot infer n from an empty hierarchy")
            self.n = self.levels[0].n
        for lvl in self.levels:
            if lvl.n != self.n:
                raise DimensionMismatch(
                    f"level {lvl.name!r} has {lvl.n} columns, hierarchy has n={self.n}")

    def __len__(self):
        return len(self.levels)

    @property
    def inequality_count(self) -> int:
        return int(sum(lvl.inequality.sum() for lvl in self.levels))

    @property
    def row_count(self) -> int:
        return int(sum(lvl.m for lvl in self.levels))


@dataclass
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 500
    rank_tol: float = 1e-10
    # switch to lowest-index pivoting after this many iterations (None: 3x rows)
    bland_after: int | None = None
    raise_on_limit: bool = False


@dataclass
class HlspSolution:
    """Result of a solve.

    ``multipliers[l][i]`` holds the multipliers of the rows of level ``i`` in
    the problem of level ``l`` (``i <= l``). ``active[l]`` flags rows held at
    their slack value at the end of the solve; EQUAL rows are always active.
    """

    x: np.ndarray
    slacks: list
    multipliers: list
    active: list
    iterations: int = 0
    converged: bool = True

    @property
    def slack_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(w) for w in self.slacks])


def slack_of(residual, relations):
    """Optimal slack of each row for a given residual ``a x + b``."""
    r = np.array(residual, dtype=float)
    rel = np.asarray(relations)
    up, lo = rel == _UP, rel == _LO
    r[up] = np.maximum(r[up], 0.0)
    r[lo] = np.minimum(r[lo], 0.0)
    return r


# -- dense linear algebra -----------------------------------------------------

def _svd(M, full=True):
    if M.size == 0:
        k = M.shape[0] if full else 0
        return (np.zeros((M.shape[0], k)), np.zeros(0), np.zeros((M.shape[1] if full else 0, M.shape[1])))
    # the raw LAPACK driver skips several microseconds of wrapper overhead per call
    U, s, Vt, info = _gesdd(M, full_matrices=int(full))
    if info != 0:
        return np.linalg.svd(M, full_matrices=full)
    return U, s, Vt


def _rank(s, rank_tol, scale=0.0):
    """Singular values above ``rank_tol`` times the larger of ``s[0]`` and ``scale``.

    ``scale`` is the norm of the rows before projection onto a nullspace basis;
    without it, rows that project to rounding noise would look full rank.
    """
    top = max(s[0], scale) if s.size else scale
    if s.size == 0 or top == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * top))


def _norm(M):
    return float(np.sqrt(np.einsum("ij,ij->", M, M))) if M.size else 0.0


def _nullspace(M, rank_tol, scale=0.0):
    """Orthonormal basis of the nullspace of M (columns)."""
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, s, Vt = _svd(M)
    return Vt[_rank(s, rank_tol, scale):].T.copy()


def _lstsq(M, rhs, rank_tol, scale=0.0):
    """Minimum-norm least-squares solution, truncating small singular values."""
    if M.shape[0] == 0 or M.shape[1] == 0:
        return np.zeros(M.shape[1])
    U, s, Vt = _svd(M, full=False)
    k = _rank(s, rank_tol, scale)
    return Vt[:k].T @ ((U[:, :k].T @ rhs) / s[:k])


# -- active-set solver ----------------------------------------------------------

class _Rows:
    """Flat view over all rows of a hierarchy."""

    def __init__(self, h):
        self.A = np.vstack([lvl.A for lvl in h.levels]) if h.levels else np.zeros((0, h.n))
        self.b = np.concatenate([lvl.b for lvl in h.levels]) if h.levels else np.zeros(0)
        self.rel = (np.concatenate([lvl.relations for lvl in h.levels])
                    if h.levels else np.zeros(0, dtype=int))
        self.level = (np.concatenate([np.full(lvl.m, l) for l, lvl in enumerate(h.levels)])
                      if h.levels else np.zeros(0, dtype=int))
        self.orient = _ORIENT[self.rel]
        self.ineq = self.rel != _EQ
        sizes = [lvl.m for lvl in h.levels]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.spans = [slice(int(a), int(b)) for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def span(self, l):
        return self.spans[l]

    def split(self, v):
        return [v[sp].copy() for sp in self.spans]


class HlspSolver:
    """Active-set solver with warm-start memory.

    Not thread safe: an instance keeps the active set of its last solve and
    seeds the next one with it when the row structure matches.
    """

    def __init__(self, options: SolverOptions | None = None):
        self.options = options or SolverOptions()
        self._warm = None

    def reset(self):
        self._warm = None

    def solve(self, h: Hierarchy, warm_start=None) -> HlspSolution:
        if warm_start is None:
            warm_start = self._warm
        sol = _solve(h, self.options, warm_start)
        self._warm = [a.copy() for a in sol.active]
        return sol


def solve(h: Hierarchy, opts: SolverOptions | None = None, warm_start=None) -> HlspSolution:
    """Lexicographic optimum of ``h``.

    ``warm_start`` is an optional list of per-level boolean arrays (the
    ``active`` field of a previous solution of a hierarchy with the same
    shape); only its inequality flags are used.
    """
    return _solve(h, opts or SolverOptions(), warm_start)


def _solve(h, opts, warm_start):
    rows = _Rows(h)
    n, tol, rtol = h.n, opts.tol, opts.rank_tol
    total = rows.A.shape[0]
    bland_after = opts.bland_after if opts.bland_after is not None else 3 * max(total, 1)
    if warm_start is not None:
        if (len(warm_start) != len(h.levels)
                or any(np.size(a) != lvl.m for a, lvl in zip(warm_start, h.levels))):
            warm_start = None
    warm = np.concatenate([np.asarray(a, bool) for a in warm_start]) if warm_start else None

    x = np.zeros(n)
    Zf = np.eye(n)                    # nullspace basis of the fixed rows
    wstar = np.zeros(total)           # recorded optimal slacks
    fixed = np.zeros(total, bool)     # held at r = w*
    hard = np.zeros(total, bool)      # higher-level inequality kept as orient*r <= orient*w*
    hard_active = np.zeros(total, bool)
    soft_active = np.zeros(total, bool)
    multipliers = []
    iterations = 0
    converged = True

    last = len(h.levels) - 1
    for l in range(len(h.levels)):
        span = rows.span(l)
        level_rows = rows.level == l
        ineq_l = level_rows & rows.ineq
        eq_l = level_rows & ~rows.ineq
        has_ineq = ineq_l.any()

        r = rows.A @ x + rows.b
        soft_active[:] = False
        if has_ineq:
            soft_active[ineq_l & (rows.orient * r > 0)] = True
            if warm is not None:
                soft_active |= ineq_l & warm
        hard_active[:] = False

        mu = None
        while True:
            if iterations >= opts.max_iter:
                converged = False
                break
            iterations += 1
            bland = iterations > bland_after

            obj = eq_l | soft_active
            F, g = rows.A[obj], rows.b[obj]
            if Zf.shape[1] and hard_active.any():
                Ah = rows.A[hard_active]
                Z = Zf @ _nullspace(Ah @ Zf, rtol, _norm(Ah))
            else:
                Z = Zf
            if Z.shape[1] and F.shape[0]:
                p = _lstsq(F @ Z, -(F @ x + g), rtol, _norm(F))
                target = x + Z @ p
            else:
                target = x.copy()
            d = target - x

            # blocking rows: inactive hard rows and inactive soft rows of level l
            candidates = ((hard & ~hard_active) | (ineq_l & ~soft_active)).nonzero()[0]
            alpha, block = 1.0, -1
            if candidates.size and d.any():
                Ac, oc = rows.A[candidates], rows.orient[candidates]
                rate = oc * (Ac @ d)
                gap = oc * (wstar[candidates] - Ac @ x - rows.b[candidates])
                scale = np.abs(Ac) @ np.abs(d)
                moving = rate > 1e-13 * np.maximum(scale, 1.0)
                if moving.any():
                    ratios = np.maximum(gap[moving], 0.0) / rate[moving]
                    k = int(np.argmin(ratios))  # argmin returns the lowest index on ties
                    if ratios[k] < 1.0:
                        alpha, block = float(ratios[k]), int(candidates[moving][k])

            if block >= 0:
                x = x + alpha * d
                if hard[block]:
                    hard_active[block] = True
                else:
                    soft_active[block] = True
                continue

            x = target
            r = rows.A @ x + rows.b
            if not hard_active.any() and not (soft_active & ineq_l).any():
                mu = None
                break
            w_level = np.where(obj, r, 0.0)[span]
            mu = _higher_multipliers(rows, l, w_level, fixed | hard_active, rtol)

            # sign check: sigma = -orient * lam must be >= 0 on inequality rows
            drop_rows = []
            hard_idx = hard_active.nonzero()[0]
            if hard_idx.size:
                sigma = -rows.orient[hard_idx] * mu[hard_idx]
                bad = sigma < -tol
                drop_rows += [(rows.level[i], s, i) for i, s in zip(hard_idx[bad], sigma[bad])]
            soft_idx = soft_active.nonzero()[0]
            if soft_idx.size:
                sigma = rows.orient[soft_idx] * r[soft_idx]
                bad = sigma < -tol
                drop_rows += [(rows.level[i], s, i) for i, s in zip(soft_idx[bad], sigma[bad])]
            if not drop_rows:
                break
            top = min(lv for lv, _, _ in drop_rows)
            pool = [(s, i) for lv, s, i in drop_rows if lv == top]
            _, i_drop = min(pool, key=(lambda t: t[1]) if bland else (lambda t: (t[0], t[1])))
            if hard_active[i_drop]:
                hard_active[i_drop] = False
            else:
                soft_active[i_drop] = False

        r = rows.A @ x + rows.b
        w_level = slack_of(r[span], rows.rel[span])
        obj = eq_l | soft_active
        if mu is None or not converged:
            mu = _higher_multipliers(rows, l, np.where(obj, r, 0.0)[span],
                                     fixed | hard_active, rtol)
        mu = _fix_signs(rows, l, np.where(obj, r, 0.0)[span], fixed | hard_active, hard_active,
                        mu, tol)
        lam = [mu[rows.span(i)].copy() for i in range(l)]
        lam.append(-w_level)
        multipliers.append(lam)
        wstar[span] = w_level

        # promote level-l rows to constraints for the levels below
        violated = ineq_l & (np.abs(wstar) > tol)
        new_fixed = eq_l | violated
        if Zf.shape[1] and l < last and new_fixed.any():
            An = rows.A[new_fixed]
            Zf = Zf @ _nullspace(An @ Zf, rtol, _norm(An))
        fixed |= new_fixed
        hard |= ineq_l & ~violated
        # tight rows carry over as hard rows; they re-enter the active set through blocking
        if not converged:
            break

    r = rows.A @ x + rows.b
    for l in range(len(multipliers), len(h.levels)):
        span = rows.span(l)
        wstar[span] = slack_of(r[span], rows.rel[span])
        multipliers.append([np.zeros(h.levels[i].m) for i in range(l + 1)])

    last = len(h.levels) - 1
    active = fixed | hard_active
    if last >= 0:
        active[rows.span(last)] = (rows.rel[rows.span(last)] == _EQ) | soft_active[rows.span(last)]
    sol = HlspSolution(x=x, slacks=rows.split(wstar), multipliers=multipliers,
                       active=rows.split(active), iterations=iterations, converged=converged)
    if not converged and opts.raise_on_limit:
        raise IterationLimit(f"active set did not settle within {opts.max_iter} iterations", sol)
    return sol


def _higher_multipliers(rows, l, w_level, constrained, rank_tol):
    """Multipliers of the constrained higher-level rows: A_c' lam_c = A_l' w_l."""
    mu = np.zeros(rows.A.shape[0])
    idx = np.flatnonzero(constrained)
    if idx.size:
        span = rows.span(l)
        rhs = rows.A[span].T @ w_level
        mu[idx] = _lstsq(rows.A[idx].T, rhs, rank_tol)
    return mu


def _fix_signs(rows, l, w_level, constrained, signed, mu, tol):
    """Pick a sign-consistent multiplier when the constraint rows are dependent.

    Only ``signed`` rows (tight higher-level inequalities) carry a sign
    condition; rows pinned at a nonzero slack behave as equalities.
    """
    idx = np.flatnonzero(constrained)
    sgn = signed[idx]
    if not np.any(sgn):
        return mu
    sigma = -rows.orient[idx] * mu[idx]
    if not np.any(sgn & (sigma < -tol)):
        return mu
    span = rows.span(l)
    rhs = rows.A[span].T @ w_level
    lo = np.where(sgn & (rows.rel[idx] == _LO), 0.0, -np.inf)
    hi = np.where(sgn & (rows.rel[idx] == _UP), 0.0, np.inf)
    res = lsq_linear(rows.A[idx].T, rhs, bounds=(lo, hi), method="bvls", tol=1e-14)
    if np.max(np.abs(rows.A[idx].T @ res.x - rhs), initial=0.0) <= max(tol, 1e-12):
        mu = mu.copy()
        mu[idx] = res.x
    return mu


# -- fixed active set and enumeration oracle -------------------------------------

def solve_equality(h: Hierarchy, active, rank_tol: float = 1e-10):
    """Cascade solve with a fixed activity pattern.

    Each level is minimised (minimum-norm) over the nullspace of the active rows
    of every level above it; inactive inequality rows are ignored. Returns
    ``(x, multipliers)`` where ``multipliers[l][i]`` matches
    :attr:`HlspSolution.multipliers`.
    """
    x = np.zeros(h.n)
    Z = np.eye(h.n)
    above = []  # (level index, row mask)
    multipliers = []
    for l, lvl in enumerate(h.levels):
        mask = np.asarray(active[l], bool) | ~lvl.inequality
        F, g = lvl.A[mask], lvl.b[mask]
        if F.shape[0] and Z.shape[1]:
            FZ = F @ Z
            x = x + Z @ _lstsq(FZ, -(F @ x + g), rank_tol, _norm(F))
            Z = Z @ _nullspace(FZ, rank_tol, _norm(F))
        w = np.zeros(lvl.m)
        w[mask] = F @ x + g
        lam = [np.zeros(h.levels[i].m) for i in range(l)] + [-w]
        if above:
            Ac = np.vstack([h.levels[i].A[m] for i, m in above])
            mu = _lstsq(Ac.T, lvl.A.T @ w, rank_tol)
            k = 0
            for i, m in above:
                cnt = int(m.sum())
                lam[i][m] = mu[k:k + cnt]
                k += cnt
        multipliers.append(lam)
        above.append((l, mask))
    return x, multipliers


def _lex_less(a, b, tol):
    for u, v in zip(a, b):
        if u < v - tol * (1.0 + abs(v)):
            return True
        if u > v + tol * (1.0 + abs(v)):
            return False
    return False


def brute_force_oracle(h: Hierarchy, max_inequalities: int = 12, tol: float = 1e-9) -> HlspSolution:
    """Enumerate all activity patterns of the inequality rows.

    Every pattern is solved with :func:`solve_equality`; patterns whose point
    violates an inactive row or whose multipliers have the wrong sign are set
    aside. The lexicographically smallest vector of per-level costs wins.
    """
    r_count = h.inequality_count
    if r_count > max_inequalities:
        raise TooLarge(f"{r_count} inequality rows exceed the enumeration limit {max_inequalities}")
    ineq_pos = [(l, j) for l, lvl in enumerate(h.levels) for j in np.flatnonzero(lvl.inequality)]
    best = None
    for bits in itertools.product((False, True), repeat=r_count):
        active = [~lvl.inequality for lvl in h.levels]
        for (l, j), on in zip(ineq_pos, bits):
            active[l][j] = on
        x, lam = solve_equality(h, active)
        costs, slacks, ok = [], [], True
        for l, lvl in enumerate(h.levels):
            r = lvl.residual(x)
            w = slack_of(r, lvl.relations)
            costs.append(float(w @ w))
            slacks.append(w)
            orient = _ORIENT[lvl.relations]
            on = active[l] & lvl.inequality
            if np.any(orient[~active[l]] * r[~active[l]] > tol):
                ok = False
            if np.any(orient[on] * r[on] < -tol):
                ok = False
        for l in range(len(h.levels)):
            for i in range(l):
                lvl = h.levels[i]
                tight = active[i] & lvl.inequality & (np.abs(slacks[i]) <= tol)
                if np.any(-_ORIENT[lvl.relations][tight] * lam[l][i][tight] < -1e-7):
                    ok = False
        key = (not ok, costs)
        if best is None or _better(key, best[0], tol):
            best = (key, x, slacks, lam, active)
    _, x, slacks, lam, active = best
    return HlspSolution(x=x, slacks=slacks, multipliers=lam,
                        active=[np.asarray(a, bool) for a in active], iterations=0)


def _better(key, ref, tol):
    (bad, costs), (ref_bad, ref_costs) = key, ref
    if bad != ref_bad:
        return ref_bad
    return _lex_less(costs, ref_costs, tol)


# -- KKT report -----------------------------------------------------------------

@dataclass
class KktReport:
    stationarity: float
    primal: float
    complementarity: float
    sign: float  # largest multiplier sign violation (0 when all signs are right)

    def passed(self, tol: float = 1e-9) -> bool:
        return max(self.stationarity, self.primal, self.complementarity, self.sign) < tol

    def worst(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity, self.sign)


def check_kkt(h: Hierarchy, sol: HlspSolution) -> KktReport:
    """Residuals of the per-level optimality conditions at ``sol``.

    Slacks are recomputed from ``sol.x`` so that perturbing the primal shows up
    in the stationarity and primal residuals.
    """
    x = np.asarray(sol.x, dtype=float)
    if x.size != h.n or len(sol.slacks) != len(h.levels):
        raise DimensionMismatch("solution does not match the hierarchy")
    stat = primal = comp = sign = 0.0
    res = [lvl.residual(x) for lvl in h.levels]
    for l, lvl in enumerate(h.levels):
        w_x = slack_of(res[l], lvl.relations)
        lam = sol.multipliers[l]
        grad = lvl.A.T @ lam[l]
        for i in range(l):
            grad = grad + h.levels[i].A.T @ lam[i]
        stat = max(stat, _amax(grad), _amax(w_x + lam[l]))
        primal = max(primal, _amax(w_x - sol.slacks[l]))
        for i in range(l + 1):
            li = h.levels[i]
            ineq = li.inequality
            gap = np.asarray(sol.slacks[i]) - res[i] if i < l else w_x - res[i]
            # relative to the multiplier scale: a well-posed but ill-conditioned active
            # set can carry large multipliers, whose product with a roundoff gap is not a violation
            scale = max(1.0, _amax(lam[i]))
            comp = max(comp, _amax((lam[i] * gap)[ineq]) / scale)
            # rows pinned at a nonzero slack act as equalities; only satisfied rows carry a sign
            signed = ineq & (np.abs(np.asarray(sol.slacks[i])) <= 1e-9) if i < l else ineq
            sign = max(sign, _amax(np.maximum(_ORIENT[li.relations] * lam[i], 0.0)[signed]))
    return KktReport(stat, primal, comp, sign)


def _amax(v):
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


# -- utilities -------------------------------------------------------------------

def random_hierarchy(rng, n_max=6, p_max=4, rows_max=3, ineq_max=12) -> Hierarchy:
    """Random dense hierarchy with mixed relations, for property tests."""
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, p_max + 1))
    levels, ineq_left = [], ineq_max
    for l in range(p):
        m = int(rng.integers(1, rows_max + 1))
        rel = rng.integers(0, 3, size=m)
        for j in range(m):
            if rel[j] != Relation.EQUAL:
                if ineq_left == 0:
                    rel[j] = Relation.EQUAL
                else:
                    ineq_left -= 1
        levels.append(PriorityLevel(rng.standard_normal((m, n)), rng.standard_normal(m),
                                    rel, name=f"L{l + 1}"))
    return Hierarchy(levels, n)


def dump_hierarchy(h: Hierarchy, path) -> None:
    """Plain-text dump of every level (matrix-market style coordinates)."""
    names = {0: "EQUAL", 1: "UPPER", 2: "LOWER"}
    with open(path, "w", newline="\n") as fh:
        fh.write(f"% hierarchy n={h.n} levels={len(h.levels)}\n")
        for l, lvl in enumerate(h.levels):
            fh.write(f"% level {l} {lvl.name} rows={lvl.m}\n")
            fh.write(f"{lvl.m} {h.n} {int(np.count_nonzero(lvl.A))}\n")
            for i, j in zip(*np.nonzero(lvl.A)):
                fh.write(f"{i + 1} {j + 1} {lvl.A[i, j]:.17g}\n")
            for i in range(lvl.m):
                fh.write(f"b {i + 1} {lvl.b[i]:.17g} {names[int(lvl.relations[i])]}\n")


def read_hierarchy_dump(path) -> Hierarchy:
    """Inverse of :func:`dump_hierarchy` (bit-exact, values use 17 digits)."""
    codes = {"EQUAL": 0, "UPPER": 1, "LOWER": 2}
    with open(path) as fh:
        lines = fh.read().splitlines()
    n = int(lines[0].split("n=")[1].split()[0])
    levels, k = [], 1
    while k < len(lines):
        name = lines[k].split()[3]
        m, _, nnz = (int(v) for v in lines[k + 1].split())
        A = np.zeros((m, n))
        for line in lines[k + 2:k + 2 + nnz]:
            i, j, v = line.split()
            A[int(i) - 1, int(j) - 1] = float(v)
        k += 2 + nnz
        b, rel = np.zeros(m), np.zeros(m, dtype=int)
        for line in lines[k:k + m]:
            _, i, v, r = line.split()
            b[int(i) - 1], rel[int(i) - 1] = float(v), codes[r]
        k += m
        levels.append(PriorityLevel(A, b, rel, name=name))
    return Hierarchy(levels, n)
