"""Exact solution of the discrete quadratic-cost transport problem.

The solver is a transportation simplex on the dense cost matrix: it keeps a
spanning-tree basis of |X| + |Y| - 1 cells, prices all cells against duals
propagated through the tree, and pivots until no reduced cost is negative.
Entering cells are chosen by the most-negative rule with lexicographic
tie-breaking; long runs of degenerate pivots switch to Bland's rule (first
negative cell in lexicographic order), which cannot cycle.  Every choice is
a deterministic function of the input, so identical instances produce
bit-identical plans and duals.

Duals are rooted at the first target site (phi(y_1) = 0) and recomputed
exactly from the final tree, so complementary slackness holds to float
precision on the support and the duality gap of the returned pair is zero
up to accumulation error.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .convex import ConvexPotential, DualPair, fenchel_gap_many
from .errors import (
    DimensionMismatchError,
    MarginalMismatchError,
    NumericalFailureError,
    OracleScopeExceededError,
    UnequalMassError,
)
from .measures import DiscreteMeasure, SampledMap

MASS_RTOL = 1e-9


@dataclass(frozen=True)
class CostMatrix:
    """Dense |X| x |Y| matrix of costs |u(x_i) - y_j|^2 / 2."""

    entries: np.ndarray
    mu: DiscreteMeasure
    nu: DiscreteMeasure

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "entries", e)
        if e.shape != (self.mu.size, self.nu.size):
            raise DimensionMismatchError(
                f"cost shape {e.shape} vs measures ({self.mu.size}, {self.nu.size})"
            )

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class TransportPlan:
    """Sparse joint measure on X x Y given as (row, col, mass) triplets."""

    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    mu: DiscreteMeasure
    nu: DiscreteMeasure

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=int).reshape(-1))
        object.__setattr__(self, "cols", np.asarray(self.cols, dtype=int).reshape(-1))
        object.__setattr__(self, "masses", np.asarray(self.masses, dtype=float).reshape(-1))
        if not (self.rows.shape == self.cols.shape == self.masses.shape):
            raise MarginalMismatchError("triplet arrays disagree in length")

    @property
    def n_triplets(self) -> int:
        return self.masses.shape[0]

    @property
    def triplets(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.masses.tolist()))

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.masses, minlength=self.mu.size)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.masses, minlength=self.nu.size)

    def validate(self, rtol: float = MASS_RTOL) -> None:
        """Check both marginals against the declared measures."""
        if self.n_triplets and np.any(self.masses <= 0):
            raise MarginalMismatchError("plan masses must be > 0")
        scale = max(1.0, self.mu.total_mass)
        if np.max(np.abs(self.row_sums() - self.mu.weights), initial=0.0) > rtol * scale:
            raise MarginalMismatchError("row sums do not match the source weights")
        if np.max(np.abs(self.col_sums() - self.nu.weights), initial=0.0) > rtol * scale:
            raise MarginalMismatchError("column sums do not match the target weights")

    def support_per_row(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.mu.size)


def _measures_agree(a: DiscreteMeasure, b: DiscreteMeasure) -> bool:
    return a is b or (
        a.size == b.size
        and a.labels == b.labels
        and np.array_equal(a.weights, b.weights)
    )


def _pairwise_cost_blocked(values: np.ndarray, sites: np.ndarray, block: int = 256) -> np.ndarray:
    m = values.shape[0]
    out = np.empty((m, sites.shape[0]))
    for start in range(0, m, block):
        chunk = values[start : start + block]
        diff = chunk[:, None, :] - sites[None, :, :]
        out[start : start + block] = 0.5 * np.einsum("ijk,ijk->ij", diff, diff)
    return out


def build_cost(u: SampledMap, Y: DiscreteMeasure) -> CostMatrix:
    """Quadratic cost between the sampled values of u and the sites of Y."""
    if Y.coords is None:
        raise DimensionMismatchError("target measure must carry coordinates")
    if u.codomain_dimension != Y.coords.shape[1]:
        raise DimensionMismatchError(
            f"map codomain {u.codomain_dimension} vs target dimension {Y.coords.shape[1]}"
        )
    mu_total, nu_total = u.domain.total_mass, Y.total_mass
    if abs(mu_total - nu_total) > MASS_RTOL * max(1.0, mu_total, nu_total):
        raise UnequalMassError(f"total masses differ: {mu_total!r} vs {nu_total!r}")
    entries = _pairwise_cost_blocked(u.values, Y.coords)
    return CostMatrix(entries, u.domain, Y)


def objective(plan: TransportPlan, cost: CostMatrix) -> float:
    """I(plan) = sum of mass * cost over the plan's triplets."""
    if not (_measures_agree(plan.mu, cost.mu) and _measures_agree(plan.nu, cost.nu)):
        raise MarginalMismatchError("plan marginals do not reference the cost's measures")
    if plan.n_triplets == 0:
        return 0.0
    return float(np.dot(plan.masses, cost.entries[plan.rows, plan.cols]))


def duality_certificate(plan: TransportPlan, duals: DualPair, cost: CostMatrix) -> dict:
    """Primal value, dual value and their gap for a solved instance."""
    primal = objective(plan, cost)
    dual = duals.dual_value(plan.mu.weights, plan.nu.weights)
    return {"I": primal, "dual_value": dual, "gap": primal - dual}


# ---------------------------------------------------------------------------
# dual interiorization
# ---------------------------------------------------------------------------

def _scc(n_nodes: int, edges) -> np.ndarray:
    """Strongly connected components (iterative Tarjan); returns labels."""
    adj = [[] for _ in range(n_nodes)]
    for p, q in edges:
        adj[p].append(q)
    index = np.full(n_nodes, -1, dtype=int)
    lowlink = np.zeros(n_nodes, dtype=int)
    on_stack = np.zeros(n_nodes, dtype=bool)
    comp = np.full(n_nodes, -1, dtype=int)
    stack: list = []
    counter = 0
    n_comp = 0
    for root in range(n_nodes):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while pi < len(adj[v]):
                w = adj[v][pi]
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if lowlink[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = n_comp
                    if w == v:
                        break
                n_comp += 1
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
    return comp


def _strictify_duals(C, rows, cols, alpha, beta, zero_tol):
    """Open positive slack between support components where the optimal face
    allows it, keeping feasibility, support tightness and the gauge.

    The simplex returns a vertex of the dual face, which leaves degenerate
    basic cells at zero reduced cost even when the minimiser is unique.
    Shifting each connected component of the support graph by a potential
    keeps all support cells tight; ranking the components along the
    condensation of the zero-slack graph makes every slack that is not
    forced tight strictly positive.
    """
    m, n = C.shape
    parent = list(range(m + n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in zip(rows, cols):
        ra, rb = find(int(i)), find(m + int(j))
        if ra != rb:
            parent[ra] = rb
    comp_row = np.array([find(i) for i in range(m)])
    comp_col = np.array([find(m + j) for j in range(n)])
    uniq, inv = np.unique(np.concatenate([comp_row, comp_col]), return_inverse=True)
    comp_row = inv[:m]
    comp_col = inv[m:]
    K = uniq.shape[0]
    if K == 1:
        return alpha, beta

    slack = C - alpha[:, None] - beta[None, :]
    S = np.full((K, K), np.inf)
    np.minimum.at(
        S,
        (
            np.broadcast_to(comp_row[:, None], (m, n)),
            np.broadcast_to(comp_col[None, :], (m, n)),
        ),
        slack,
    )
    off_diag = ~np.eye(K, dtype=bool)
    zero_edges = list(zip(*np.nonzero((S <= zero_tol) & off_diag)))

    scc = _scc(K, zero_edges)
    n_scc = int(scc.max()) + 1
    # longest-path ranks over the condensation: delta must grow along edges
    indeg = np.zeros(n_scc, dtype=int)
    cond_adj = [set() for _ in range(n_scc)]
    for p, q in zero_edges:
        if scc[p] != scc[q] and scc[q] not in cond_adj[scc[p]]:
            cond_adj[scc[p]].add(scc[q])
            indeg[scc[q]] += 1
    rank = np.zeros(n_scc, dtype=int)
    ready = deque(sorted(np.nonzero(indeg == 0)[0].tolist()))
    while ready:
        s = ready.popleft()
        for t in sorted(cond_adj[s]):
            rank[t] = max(rank[t], rank[s] + 1)
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    comp_rank = rank[scc]
    # only pairs whose shift goes against the slack constrain the step size:
    # gamma * (rank_p - rank_q) <= S[p, q] wherever rank_p > rank_q
    rank_drop = comp_rank[:, None] - comp_rank[None, :]
    binding = (rank_drop > 0) & np.isfinite(S) & off_diag
    if np.any(binding):
        gamma = 0.5 * float(np.min(S[binding] / rank_drop[binding]))
    else:
        gamma = 1.0
    if gamma <= 0.0:
        return alpha, beta
    delta = gamma * comp_rank
    delta = delta - delta[comp_col[0]]  # keep phi(y_1) = 0
    return alpha + delta[comp_row], beta - delta[comp_col]


# ---------------------------------------------------------------------------
# transportation simplex
# ---------------------------------------------------------------------------

class _Simplex:
    """Spanning-tree simplex for the balanced transportation problem.

    Tree nodes are rows 0..m-1 and columns m..m+n-1.
    """

    def __init__(self, C: np.ndarray, a: np.ndarray, b: np.ndarray):
        self.C = C
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.m, self.n = C.shape
        self.X = np.zeros_like(C)
        self.basis = np.zeros(C.shape, dtype=bool)
        self.adj = [set() for _ in range(self.m + self.n)]
        self.alpha = np.zeros(self.m)
        self.beta = np.zeros(self.n)
        self.tol = 1e-11 * max(1.0, float(np.max(np.abs(C)))) if C.size else 1e-11

    def _add_edge(self, i: int, j: int, mass: float) -> None:
        self.basis[i, j] = True
        self.X[i, j] = mass
        self.adj[i].add(self.m + j)
        self.adj[self.m + j].add(i)

    def _drop_edge(self, i: int, j: int) -> None:
        self.basis[i, j] = False
        self.adj[i].discard(self.m + j)
        self.adj[self.m + j].discard(i)

    # -- initial basis ---------------------------------------------------------
    def _initial_basis(self) -> None:
        """Row-minimum start: each row fills its cheapest active columns.

        Every allocation crosses out exactly one line, so the m+n-1 chosen
        cells are acyclic and span all rows and columns.
        """
        ra = self.a.copy()
        rb = self.b.copy()
        col_active = np.ones(self.n, dtype=bool)
        n_active = self.n
        for i in range(self.m):
            last_row = i == self.m - 1
            while True:
                masked = np.where(col_active, self.C[i], np.inf)
                j = int(np.argmin(masked))
                if last_row:
                    if n_active > 1:
                        t = max(float(rb[j]), 0.0)
                        self._add_edge(i, j, t)
                        ra[i] -= t
                        rb[j] = 0.0
                        col_active[j] = False
                        n_active -= 1
                        continue
                    self._add_edge(i, j, max(float(ra[i]), 0.0))
                    return
                t = float(min(ra[i], rb[j]))
                if rb[j] < ra[i] and n_active > 1:
                    self._add_edge(i, j, t)
                    ra[i] -= t
                    rb[j] = 0.0
                    col_active[j] = False
                    n_active -= 1
                else:
                    # row exhausted (ties also close the row; the column
                    # stays active and receives a zero basic cell later)
                    self._add_edge(i, j, t)
                    rb[j] -= t
                    ra[i] = 0.0
                    break

    # -- duals -----------------------------------------------------------------
    def _recompute_duals(self) -> None:
        """Exact duals from the tree, rooted at the first column (beta_0 = 0)."""
        alpha, beta = self.alpha, self.beta
        beta[0] = 0.0
        seen = np.zeros(self.m + self.n, dtype=bool)
        root = self.m
        seen[root] = True
        queue = deque([root])
        while queue:
            node = queue.popleft()
            for nxt in self.adj[node]:
                if seen[nxt]:
                    continue
                seen[nxt] = True
                if nxt < self.m:
                    alpha[nxt] = self.C[nxt, node - self.m] - beta[node - self.m]
                else:
                    beta[nxt - self.m] = self.C[node, nxt - self.m] - alpha[node]
                queue.append(nxt)
        if not bool(seen.all()):
            raise NumericalFailureError("basis tree does not span the instance")

    def _component_of(self, start: int) -> set:
        seen = {start}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for nxt in self.adj[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen

    def _tree_path(self, src: int, dst: int) -> list:
        # the tree path is unique, so traversal order cannot affect it
        parent = {src: None}
        queue = deque([src])
        while queue:
            node = queue.popleft()
            if node == dst:
                break
            for nxt in self.adj[node]:
                if nxt not in parent:
                    parent[nxt] = node
                    queue.append(nxt)
        path = [dst]
        while path[-1] != src:
            path.append(parent[path[-1]])
        path.reverse()
        return path

    # -- pivoting ----------------------------------------------------------------
    def _entering(self, bland: bool):
        reduced = self.C - self.alpha[:, None] - self.beta[None, :]
        flat = reduced.ravel()
        if bland:
            hit = np.flatnonzero(flat < -self.tol)
            if hit.size == 0:
                return None
            k = int(hit[0])
        else:
            k = int(np.argmin(flat))
            if flat[k] >= -self.tol:
                return None
        return divmod(k, self.n)

    def _pivot(self, ei: int, ej: int) -> float:
        path = self._tree_path(ei, self.m + ej)
        minus, plus = [], []
        for t in range(len(path) - 1):
            u, v = path[t], path[t + 1]
            cell = (u, v - self.m) if u < self.m else (v, u - self.m)
            (minus if t % 2 == 0 else plus).append(cell)
        theta = min(self.X[c] for c in minus)
        leaving = min(c for c in minus if self.X[c] == theta)
        for c in plus:
            self.X[c] += theta
        for c in minus:
            self.X[c] -= theta
            if self.X[c] < 0.0:
                self.X[c] = 0.0
        delta = float(self.C[ei, ej] - self.alpha[ei] - self.beta[ej])
        self._drop_edge(*leaving)
        self.X[leaving] = 0.0
        # duals shift on the side of the cut that excludes the root column
        side = self._component_of(ei)
        self._add_edge(ei, ej, theta)
        if self.m not in side:
            rows = [v for v in side if v < self.m]
            cols = [v - self.m for v in side if v >= self.m]
            self.alpha[rows] += delta
            self.beta[cols] -= delta
        else:
            mask = np.zeros(self.m + self.n, dtype=bool)
            mask[list(side)] = True
            self.alpha[~mask[: self.m]] -= delta
            self.beta[~mask[self.m :]] += delta
        return float(theta)

    def solve(self) -> int:
        self._initial_basis()
        self._recompute_duals()
        bland = False
        degenerate_run = 0
        bland_trigger = 3 * (self.m + self.n) + 50
        degeneracy_scale = 1e-14 * max(1.0, float(np.max(self.a, initial=0.0)))
        hard_cap = 200 * (self.m + self.n) + 2 * self.m * self.n + 10_000
        pivots = 0
        while True:
            cell = self._entering(bland)
            if cell is None:
                # re-price against freshly recomputed duals before accepting
                self._recompute_duals()
                cell = self._entering(bland)
                if cell is None:
                    break
            theta = self._pivot(*cell)
            pivots += 1
            if theta <= degeneracy_scale:
                degenerate_run += 1
                if degenerate_run > bland_trigger:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            if pivots > hard_cap:
                raise NumericalFailureError(f"pivot safeguard exceeded after {pivots} pivots")
        self._recompute_duals()
        return pivots


def solve_mk(cost: CostMatrix, mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Minimise sum(mass * cost) over plans with marginals (mu, nu).

    Returns a basic optimal plan together with the dual pair recovered by
    complementary slackness, normalised so the target potential vanishes at
    the first site.
    """
    if not (_measures_agree(mu, cost.mu) and _measures_agree(nu, cost.nu)):
        raise MarginalMismatchError("measures do not match the cost matrix")
    total_mu, total_nu = mu.total_mass, nu.total_mass
    if abs(total_mu - total_nu) > MASS_RTOL * max(1.0, total_mu, total_nu):
        raise UnequalMassError(f"total masses differ: {total_mu!r} vs {total_nu!r}")
    sx = _Simplex(cost.entries, mu.weights, nu.weights)
    sx.solve()
    keep = sx.X > 0.0
    rows, cols = np.nonzero(keep)
    plan = TransportPlan(rows, cols, sx.X[keep], mu, nu)
    alpha, beta = _strictify_duals(
        cost.entries, rows, cols, sx.alpha.copy(), sx.beta.copy(), sx.tol
    )
    duals = DualPair(alpha, beta, cost)
    cert = duality_certificate(plan, duals, cost)
    if abs(cert["gap"]) > MASS_RTOL * (1.0 + abs(cert["I"])):
        raise NumericalFailureError(f"duality gap {cert['gap']!r} exceeds tolerance")
    return plan, duals


def brute_force_mk(cost: CostMatrix, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact optimum by permutation enumeration (uniform square instances only).

    For uniform marginals some permutation matrix scaled by the point mass is
    optimal, so scanning all |X|! assignments gives an independent oracle.
    """
    m, n = cost.shape
    if m != n or m > 8:
        raise OracleScopeExceededError(f"oracle limited to square instances <= 8, got {m}x{n}")
    w = mu.weights
    v = nu.weights
    if not (np.allclose(w, w[0], rtol=1e-12, atol=0) and np.allclose(v, v[0], rtol=1e-12, atol=0)):
        raise OracleScopeExceededError("oracle requires uniform weights on both sides")
    if abs(w[0] - v[0]) > 1e-12 * max(1.0, abs(w[0])):
        raise OracleScopeExceededError("oracle requires equal uniform weights")
    perms = np.array(list(permutations(range(n))), dtype=int)
    totals = cost.entries[np.arange(n)[None, :], perms].sum(axis=1)
    return float(w[0] * totals.min())


def shifted_objective(plan: TransportPlan, psi: ConvexPotential, u: SampledMap) -> float:
    """Plan-weighted sum of Fenchel gaps; equals I plus a marginal-only shift."""
    if plan.mu.size != u.domain.size:
        raise MarginalMismatchError("plan source does not match the map's domain")
    if plan.nu.size != psi.support.size:
        raise MarginalMismatchError("plan target does not match the potential's support")
    if plan.n_triplets == 0:
        return 0.0
    gaps = fenchel_gap_many(psi, u.values[plan.rows], plan.cols)
    return float(np.dot(plan.masses, gaps))


def _northwest_cells(a: np.ndarray, b: np.ndarray):
    m, n = a.shape[0], b.shape[0]
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    i = j = 0
    cells = []
    while True:
        t = float(min(ra[i], rb[j]))
        cells.append((i, j, t))
        ra[i] -= t
        rb[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if ra[i] <= rb[j] and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return cells


def random_plan(mu: DiscreteMeasure, nu: DiscreteMeasure, seed: int) -> TransportPlan:
    """Feasible plan from a north-west fill over seeded shuffled index orders."""
    total_mu, total_nu = mu.total_mass, nu.total_mass
    if abs(total_mu - total_nu) > MASS_RTOL * max(1.0, total_mu, total_nu):
        raise UnequalMassError(f"total masses differ: {total_mu!r} vs {total_nu!r}")
    rng = np.random.default_rng(seed)
    rp = rng.permutation(mu.size)
    cp = rng.permutation(nu.size)
    cells = _northwest_cells(mu.weights[rp], nu.weights[cp])
    rows = np.array([int(rp[i]) for i, _, t in cells if t > 0], dtype=int)
    cols = np.array([int(cp[j]) for _, j, t in cells if t > 0], dtype=int)
    masses = np.array([t for _, _, t in cells if t > 0])
    return TransportPlan(rows, cols, masses, mu, nu)


def worst_cycle_violation(
    plan: TransportPlan,
    cost: CostMatrix,
    n_samples: int = 1000,
    max_len: int = 5,
    seed: int = 0,
) -> float:
    """Largest violation of cyclical monotonicity over sampled support cycles.

    Samples cycles (x_1,y_1),...,(x_k,y_k) of support pairs and compares the
    diagonal cost sum against the one with targets rotated by one position;
    a return <= 0 certifies every sampled cycle.
    """
    k_support = plan.n_triplets
    if k_support < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    c = cost.entries
    for _ in range(n_samples):
        k = min(int(rng.integers(2, max_len + 1)), k_support)
        pick = rng.choice(k_support, size=k, replace=False)
        r = plan.rows[pick]
        y = plan.cols[pick]
        violation = float(np.sum(c[r, y]) - np.sum(c[r, np.roll(y, -1)]))
        worst = max(worst, violation)
    return worst
