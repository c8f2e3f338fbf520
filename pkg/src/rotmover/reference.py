"""Slow-but-sure oracles the production solvers are checked against.

Two live here: an exact unregularized transport solver (transportation
simplex with an optimality certificate) and a conditional-gradient solver
for the regularized problem that only ever touches the polytope through
the exact solver. Neither shares code with the production path, which is
the point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    OracleDidNotConverge,
    RotError,
    _as_matrix,
    _as_vector,
)
from .regularizers import Kind, Regularizer



@dataclass(frozen=True, eq=False)
class EmdSolution:
    """Optimal unregularized plan plus its certificate ingredients."""

    plan: np.ndarray
    distance: float
    row_potentials: np.ndarray
    col_potentials: np.ndarray


class _TransportSimplex:
    """Primal transportation simplex over a spanning-tree basis.

    Masses are perturbed with a per-row epsilon cascade so the northwest
    corner start is nondegenerate; the final flows are re-derived from the
    optimal basis against the unperturbed masses, so the answer itself is
    not perturbed. The basis survives between ``minimize`` calls, which
    makes repeated solves with slowly changing costs (the conditional
    gradient loop) cheap.
    """

    def __init__(self, p, q):
        self.p = np.array(_as_vector(p), dtype=np.float64)
        self.q = np.array(_as_vector(q), dtype=np.float64)
        self.m = self.p.shape[0]
        self.n = self.q.shape[0]
        if abs(self.p.sum() - self.q.sum()) > 1e-9:
            raise RotError("masses must balance")
        eps0 = 1e-11 / max(self.m, 1)
        a = self.p + eps0 * np.arange(1, self.m + 1)
        b = self.q.copy()
        b[-1] += eps0 * (self.m * (self.m + 1) // 2)
        # caches keyed on the basis fingerprint: the extracted plan, the
        # traversal order and pivot cycles depend on the tree, not the
        # costs, and a conditional-gradient caller revisits the same few
        # bases over and over
        self._key = None
        self._plan_cache: dict[bytes, np.ndarray] = {}
        self._order_cache: dict[bytes, list] = {}
        self._cycle_cache: dict[tuple[bytes, int], list] = {}
        self._init_northwest(a, b)

    def _init_northwest(self, a, b):
        m, n = self.m, self.n
        a = a.copy()
        b = b.copy()
        self.flows = np.zeros((m, n))
        self.basis = np.zeros((m, n), dtype=bool)
        # adjacency over nodes 0..m-1 (rows) and m..m+n-1 (cols)
        self.adj: list[dict[int, tuple[int, int]]] = [dict() for _ in range(m + n)]
        i = j = 0
        while True:
            f = min(a[i], b[j])
            self._add_edge(i, j, f)
            a[i] -= f
            b[j] -= f
            if i == m - 1 and j == n - 1:
                break
            if a[i] <= b[j] and i < m - 1:
                i += 1
            else:
                j += 1
        if int(self.basis.sum()) != m + n - 1:
            raise RotError("degenerate northwest start, basis incomplete")

    def _add_edge(self, i, j, flow):
        self.basis[i, j] = True
        self.flows[i, j] = flow
        self.adj[i][self.m + j] = (i, j)
        self.adj[self.m + j][i] = (i, j)
        self._key = None

    def _drop_edge(self, i, j):
        self.basis[i, j] = False
        self.flows[i, j] = 0.0
        del self.adj[i][self.m + j]
        del self.adj[self.m + j][i]
        self._key = None

    def _fingerprint(self) -> bytes:
        if self._key is None:
            self._key = np.packbits(self.basis).tobytes()
        return self._key

    def _traversal(self):
        # root-to-leaf edge order, recomputed only for unseen bases
        key = self._fingerprint()
        order = self._order_cache.get(key)
        if order is not None:
            return order
        m = self.m
        order = []
        seen = np.zeros(m + self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            node = stack.pop()
            for other, (i, j) in self.adj[node].items():
                if seen[other]:
                    continue
                order.append((other, i, j))
                seen[other] = True
                stack.append(other)
        if not seen.all():
            raise RotError("basis does not span the bipartite graph")
        if len(self._order_cache) > 40000:
            self._order_cache.clear()
        self._order_cache[key] = order
        return order

    def _potentials(self, gamma):
        m = self.m
        u = np.zeros(m)
        v = np.zeros(self.n)
        for node, i, j in self._traversal():
            if node >= m:  # row end known, fix the column potential
                v[j] = gamma[i, j] - u[i]
            else:
                u[i] = gamma[i, j] - v[j]
        return u, v

    def _cycle(self, i0, j0):
        # tree path from row node i0 to column node m + j0
        m = self.m
        target = m + j0
        ckey = (self._fingerprint(), i0 * self.n + j0)
        path = self._cycle_cache.get(ckey)
        if path is not None:
            return path
        parent = {i0: (-1, None)}
        stack = [i0]
        while stack:
            node = stack.pop()
            if node == target:
                break
            for other, cell in self.adj[node].items():
                if other not in parent:
                    parent[other] = (node, cell)
                    stack.append(other)
        path = []
        node = target
        while node != i0:
            prev, cell = parent[node]
            path.append(cell)
            node = prev
        path.reverse()
        if len(self._cycle_cache) > 40000:
            self._cycle_cache.clear()
        self._cycle_cache[ckey] = path
        return path  # basis cells along the path, first shares row i0

    def minimize(self, gamma, max_pivots=200000, rule="bland"):
        """Pivot to optimality for ``gamma``; returns (plan, u, v).

        ``rule`` selects the entering variable: "bland" takes the first
        row-major cell with negative reduced cost (anti-cycling on its
        own), "dantzig" takes the most negative one, which needs far
        fewer pivots on warm starts but can stall on degenerate ties, so
        it falls back to Bland whenever the objective stops improving.
        The returned optimum is the same either way.
        """
        g = _as_matrix(gamma)
        scale = max(1.0, float(np.max(np.abs(g))))
        enter_tol = 5e-13 * scale
        m, n = self.m, self.n
        stalled = 0
        for _ in range(max_pivots):
            u, v = self._potentials(g)
            red = g - u[:, None] - v[None, :]
            red[self.basis] = 0.0
            flat = red.ravel()
            if rule == "dantzig" and stalled < 3 * (m + n):
                pos = int(np.argmin(flat))
                if flat[pos] >= -enter_tol:
                    return self._finish(u, v)
            else:
                negmask = flat < -enter_tol
                pos = int(np.argmax(negmask))
                if not negmask[pos]:
                    return self._finish(u, v)
            i0, j0 = divmod(pos, n)
            path = self._cycle(i0, j0)
            # entering cell takes +delta, path edges alternate starting at -
            minus = path[0::2]
            deltas = [self.flows[i, j] for (i, j) in minus]
            delta = min(deltas)
            stalled = stalled + 1 if delta <= 0.0 else 0
            # Bland on the way out: among ties pick the smallest cell index
            leave = min((c for c, d in zip(minus, deltas) if d == delta),
                        key=lambda c: c[0] * n + c[1])
            for t, (i, j) in enumerate(path):
                self.flows[i, j] += delta if t % 2 else -delta
            self._drop_edge(*leave)
            self._add_edge(i0, j0, delta)
        raise RotError("transportation simplex exceeded its pivot budget")

    def _finish(self, u, v):
        key = self._fingerprint()
        plan = self._plan_cache.get(key)
        if plan is None:
            plan = self._extract()
            if len(self._plan_cache) > 40000:
                self._plan_cache.clear()
            self._plan_cache[key] = plan
        return plan, u, v

    def _extract(self):
        """Flows from the current basis against the unperturbed masses."""
        m, n = self.m, self.n
        plan = np.zeros((m, n))
        ra = self.p.copy()
        rb = self.q.copy()
        deg = np.array([len(d) for d in self.adj])
        live = {node: dict(d) for node, d in enumerate(self.adj)}
        leaves = [node for node in range(m + n) if deg[node] == 1]
        while leaves:
            node = leaves.pop()
            if deg[node] != 1:
                continue
            (other, (i, j)), = live[node].items()
            f = ra[i] if node < m else rb[j]
            plan[i, j] = max(f, 0.0)
            ra[i] -= f
            rb[j] -= f
            del live[node][other]
            del live[other][node]
            deg[node] -= 1
            deg[other] -= 1
            if deg[other] == 1:
                leaves.append(other)
        return plan


def _certify(plan, u, v, gamma, p, q):
    m, n = gamma.shape
    tol = 64.0 * np.finfo(np.float64).eps * (m + n) * max(1.0, float(np.max(np.abs(gamma))))
    red = gamma - u[:, None] - v[None, :]
    if float(red.min()) < -tol:
        raise RotError("complementary slackness failed: u_i + v_j > gamma_ij")
    support = plan > 0
    if support.any() and float(np.max(np.abs(red[support]))) > tol:
        raise RotError("complementary slackness failed on the support")
    if max(float(np.max(np.abs(plan.sum(axis=1) - p))),
           float(np.max(np.abs(plan.sum(axis=0) - q)))) > 1e-9:
        raise RotError("simplex produced an infeasible plan")


def emd_exact(p, q, gamma) -> EmdSolution:
    """Exact earth mover's plan and distance.

    Northwest-corner start, Bland's rule (first eligible cell in row-major
    order) for anti-cycling, epsilon cascade against degeneracy. Every
    solve is certified through complementary slackness before returning.
    """
    pv = _as_vector(p)
    qv = _as_vector(q)
    g = _as_matrix(gamma)
    if g.shape != (pv.shape[0], qv.shape[0]):
        raise RotError(f"cost shape {g.shape} does not match marginals")
    lp = _TransportSimplex(pv, qv)
    plan, u, v = lp.minimize(g)
    plan = plan.copy()
    _certify(plan, u, v, g, pv, qv)
    if int(np.count_nonzero(plan)) > pv.shape[0] + qv.shape[0] - 1:
        raise RotError("basic plan has too many positive entries")
    return EmdSolution(plan=plan, distance=float(np.vdot(plan, g)),
                       row_potentials=u, col_potentials=v)


def _slope_bisect(df, hi, iters=90):
    """Root of an increasing directional derivative on (0, hi].

    Works on the sign of df rather than section search on values: close
    to the optimum the value differences a section search compares drop
    below float64 resolution while the slope stays cleanly signed, and
    the oracle needs step sizes resolved far below that noise floor.
    Secant candidates are interleaved with plain bisection so the
    bracket provably shrinks while smooth stretches converge fast.
    """
    fb = df(hi)
    if fb <= 0.0:
        return hi
    a, b = 0.0, hi
    fa = None  # df(0) < 0 by construction, value itself not needed yet
    use_secant = False
    for _ in range(iters):
        width = b - a
        if width <= 1e-15 * hi:
            break
        mid = 0.5 * (a + b)
        if use_secant and fa is not None and fb != fa:
            cand = a - fa * (b - a) / (fb - fa)
            if a + 0.05 * width < cand < b - 0.05 * width:
                mid = cand
        use_secant = not use_secant
        fm = df(mid)
        if fm <= 0.0:
            a, fa = mid, fm
        else:
            b, fb = mid, fm
    return 0.5 * (a + b)


def projection_oracle(p, q, gamma, reg: Regularizer, lam: float, tol: float,
                      max_iters: int = 1_000_000) -> np.ndarray:
    """Conditional-gradient solve of the regularized transport problem.

    Starts from the independence plan p q^T (positive marginals required),
    calls :func:`emd_exact`-style pivoting as the linear minimization
    oracle, and stops when the duality gap <pi - s, grad> drops to ``tol``.
    Line search is closed-form for the (weighted) Euclidean families and a
    slope-sign bisection otherwise; for families whose phi' blows up at the
    domain boundary the search stays on the open segment so iterates keep
    strictly positive entries.
    """
    pv = _as_vector(p)
    qv = _as_vector(q)
    g = _as_matrix(gamma)
    if np.any(pv <= 0) or np.any(qv <= 0):
        raise RotError("oracle needs strictly positive marginals, reduce support first")
    pi = np.outer(pv, qv)
    lp = _TransportSimplex(pv, qv)
    quad = reg.kind in (Kind.EUC, Kind.WEUC)
    open_segment = math.isinf(reg.phi_prime_at_zero)
    t_hi = 1.0 - 1e-9 if open_segment else 1.0
    w = reg.weights if reg.kind is Kind.WEUC else None
    for _ in range(max_iters):
        grad = g + lam * reg.phi_prime(pi)
        s, _, _ = lp.minimize(grad, rule="dantzig")
        d = s - pi
        gap = -float(np.vdot(d, grad))
        if gap <= tol:
            return pi
        if quad:
            wmat = 1.0 if w is None else w
            denom = lam * float(np.vdot(d, wmat * d))
            slope = float(np.vdot(d, grad))
            t = min(t_hi, max(0.0, -slope / denom)) if denom > 0 else t_hi
        else:
            lin = float(np.vdot(d, g))

            def df(t):
                return lin + lam * float(np.vdot(d, reg.phi_prime(pi + t * d)))

            t = _slope_bisect(df, t_hi)
        if t <= 0.0:
            t = 1e-16  # keep moving, gap is still above tol
        pi = pi + t * d
    raise OracleDidNotConverge(f"duality gap still above {tol!r} after {max_iters} iterations")
