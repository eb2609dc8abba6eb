"""Base-matrix algebra and circulant-PEG lifting to labeled parity-check matrices.

A protograph is a small non-negative integer matrix B (entries = edge
multiplicities between check and variable node types).  The design search
enumerates candidate matrices up to row/column permutation, the refinement
step grows a winner into a larger 0/1 matrix plus one extra edge, and the
expansion step lifts a base matrix by circulant permutations chosen greedily
for girth, assigning uniformly random nonzero labels afterwards.
"""

from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np

from .galois import Field

UNREACHED = 1 << 30


class InfeasibleExpansion(ValueError):
    """Raised when a base entry exceeds the lifting factor."""


# ---------------------------------------------------------------------------
# base-matrix text format
# ---------------------------------------------------------------------------

def save_base(path, base: np.ndarray):
    base = np.asarray(base)
    with open(path, "w") as f:
        f.write(f"{base.shape[0]} {base.shape[1]}\n")
        for row in base:
            f.write(" ".join(str(int(x)) for x in row) + "\n")


def load_base(path) -> np.ndarray:
    with open(path) as f:
        tokens = f.read().split()
    mb, nb = int(tokens[0]), int(tokens[1])
    vals = [int(t) for t in tokens[2:2 + mb * nb]]
    if len(vals) != mb * nb:
        raise ValueError(f"base matrix file truncated: need {mb * nb} entries")
    return np.array(vals, dtype=np.int64).reshape(mb, nb)


def design_rate(base: np.ndarray) -> float:
    mb, nb = np.asarray(base).shape
    return (nb - mb) / nb


# ---------------------------------------------------------------------------
# candidate enumeration and canonical forms
# ---------------------------------------------------------------------------

def canonical_form(base: np.ndarray) -> np.ndarray:
    """Canonical representative under row and/or column permutations.

    Lexicographic minimum, over all row permutations, of the matrix with
    columns sorted; exact (not a heuristic) for any size, practical for the
    small row counts used here.
    """
    base = np.asarray(base, dtype=np.int64)
    best = None
    for perm in itertools.permutations(range(base.shape[0])):
        rows = base[list(perm), :]
        cols = sorted(map(tuple, rows.T))
        flat = tuple(itertools.chain.from_iterable(zip(*cols)))
        if best is None or flat < best:
            best = flat
    return np.array(best, dtype=np.int64).reshape(base.shape)


def canonical_key(base: np.ndarray) -> tuple:
    return tuple(canonical_form(base).ravel())


def passes_expurgation(base: np.ndarray) -> bool:
    """No zero-weight column; at most m_b columns of weight 1."""
    base = np.asarray(base)
    col_w = base.sum(axis=0)
    if (col_w == 0).any():
        return False
    return int((col_w == 1).sum()) <= base.shape[0]


def minimal_set(candidates) -> list[np.ndarray]:
    """Deduplicate by canonical form; returns canonical representatives, sorted."""
    seen = {}
    for b in candidates:
        key = canonical_key(b)
        if key not in seen:
            seen[key] = np.array(key, dtype=np.int64).reshape(np.asarray(b).shape)
    return [seen[k] for k in sorted(seen)]


def enumerate_candidates(m_b: int, n_b: int, p_max: int) -> list[np.ndarray]:
    """Expurgated minimal set of m_b x n_b matrices with entries in Z_{p_max}."""
    if m_b < 1 or n_b < 1:
        raise ValueError("base matrix dimensions must be positive")
    if p_max < 2:
        raise ValueError("p_max must be at least 2")
    survivors = []
    for entries in itertools.product(range(p_max), repeat=m_b * n_b):
        b = np.array(entries, dtype=np.int64).reshape(m_b, n_b)
        if passes_expurgation(b):
            survivors.append(b)
    return minimal_set(survivors)


def single_entry_matrices(m_b: int, n_b: int):
    for i in range(m_b):
        for j in range(n_b):
            q = np.zeros((m_b, n_b), dtype=np.int64)
            q[i, j] = 1
            yield q


def refine_candidates(base_star: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Refinement-step candidates grown from a step-1 winner.

    Expands ``base_star`` by its largest entry into a 0/1 matrix B', then adds
    every possible single-entry matrix and reduces to a minimal set.  Returns
    (B', candidates); thresholds order the candidates at the caller.
    """
    base_star = np.asarray(base_star, dtype=np.int64)
    ell = int(base_star.max())
    if ell < 1:
        raise ValueError("base matrix has no edges")
    expanded = expand_base(base_star, ell)
    cands = [expanded + q for q in single_entry_matrices(*expanded.shape)]
    return expanded, minimal_set(cands)


# ---------------------------------------------------------------------------
# circulant PEG
# ---------------------------------------------------------------------------

def _bfs_distances(adj_v, adj_c, start_vn: int, n_checks: int) -> np.ndarray:
    """Edge-hop distances from a variable node to every check node."""
    dist_c = np.full(n_checks, UNREACHED, dtype=np.int64)
    dist_v = np.full(len(adj_v), UNREACHED, dtype=np.int64)
    dist_v[start_vn] = 0
    queue = deque([(start_vn, True)])
    while queue:
        node, is_vn = queue.popleft()
        if is_vn:
            for c in adj_v[node]:
                if dist_c[c] == UNREACHED:
                    dist_c[c] = dist_v[node] + 1
                    queue.append((c, False))
        else:
            for v in adj_c[node]:
                if dist_v[v] == UNREACHED:
                    dist_v[v] = dist_c[node] + 1
                    queue.append((v, True))
    return dist_c


def circulant_shifts(base: np.ndarray, ell: int) -> dict:
    """Greedy girth-maximizing circulant shift selection.

    For each base edge (i, j) and each of its b_ij copies, picks the unused
    shift whose check node lies farthest (in the graph built so far) from the
    variable node group; smallest shift on ties.  Deterministic.
    """
    base = np.asarray(base, dtype=np.int64)
    m_b, n_b = base.shape
    if (base > ell).any():
        raise InfeasibleExpansion(
            f"base entry {int(base.max())} exceeds lifting factor {ell}"
        )
    n_vars, n_checks = n_b * ell, m_b * ell
    adj_v = [[] for _ in range(n_vars)]
    adj_c = [[] for _ in range(n_checks)]
    shifts: dict = {}
    for j in range(n_b):
        for i in range(m_b):
            used: list[int] = []
            for _ in range(int(base[i, j])):
                dist_c = _bfs_distances(adj_v, adj_c, j * ell, n_checks)
                best_s, best_d = -1, -1
                for s in range(ell):
                    if s in used:
                        continue
                    d = int(dist_c[i * ell + s])
                    if d > best_d:
                        best_s, best_d = s, d
                used.append(best_s)
                for t in range(ell):
                    v = j * ell + t
                    c = i * ell + (t + best_s) % ell
                    adj_v[v].append(c)
                    adj_c[c].append(v)
            if used:
                shifts[(i, j)] = used
    return shifts


def expand_base(base: np.ndarray, ell: int) -> np.ndarray:
    """Protograph lifting of the base matrix itself: 0/1 matrix of shape (ell*m_b, ell*n_b)."""
    base = np.asarray(base, dtype=np.int64)
    m_b, n_b = base.shape
    out = np.zeros((ell * m_b, ell * n_b), dtype=np.int64)
    for (i, j), ss in circulant_shifts(base, ell).items():
        for s in ss:
            for t in range(ell):
                out[i * ell + (t + s) % ell, j * ell + t] = 1
    return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class ParityCheckMatrix:
    """Sparse labeled matrix over GF(m), stored as a dense label array (0 = no edge)."""

    def __init__(self, labels: np.ndarray, field: Field, meta: dict | None = None):
        labels = np.asarray(labels, dtype=np.int64)
        if (labels < 0).any() or (labels >= field.m).any():
            raise ValueError("labels out of field range")
        if (labels.astype(bool).sum(axis=0) == 0).any():
            raise ValueError("parity-check matrix has a zero-weight column")
        self.labels = labels
        self.field = field
        self.meta = dict(meta or {})

    @property
    def shape(self):
        return self.labels.shape

    @property
    def n_checks(self):
        return self.labels.shape[0]

    @property
    def n_vars(self):
        return self.labels.shape[1]

    def triplets(self):
        """(rows, cols, labels) of the nonzero entries, column-major order."""
        cols, rows = np.nonzero(self.labels.T)
        return rows, cols, self.labels[rows, cols]

    def column_weights(self):
        return self.labels.astype(bool).sum(axis=0)

    def row_weights(self):
        return self.labels.astype(bool).sum(axis=1)

    def girth(self) -> int:
        return bipartite_girth(self.labels != 0)

    def save_alist(self, path):
        """Extended alist: header "N M m", degree lists, then (index, exponent)
        pairs per column and per row, 1-based, padded with (0, -1)."""
        rows, cols, labels = self.triplets()
        M, N = self.shape
        col_deg = self.column_weights()
        row_deg = self.row_weights()
        dc, dr = int(col_deg.max()), int(row_deg.max())
        log = self.field.log_table
        with open(path, "w") as f:
            f.write(f"{N} {M} {self.field.m}\n")
            f.write(" ".join(str(int(d)) for d in col_deg) + "\n")
            f.write(" ".join(str(int(d)) for d in row_deg) + "\n")
            for j in range(N):
                pairs = [(int(r) + 1, int(log[self.labels[r, j]]))
                         for r in np.nonzero(self.labels[:, j])[0]]
                pairs += [(0, -1)] * (dc - len(pairs))
                f.write(" ".join(f"{a} {b}" for a, b in pairs) + "\n")
            for i in range(M):
                pairs = [(int(c) + 1, int(log[self.labels[i, c]]))
                         for c in np.nonzero(self.labels[i, :])[0]]
                pairs += [(0, -1)] * (dr - len(pairs))
                f.write(" ".join(f"{a} {b}" for a, b in pairs) + "\n")

    @classmethod
    def load_alist(cls, path, field: Field | None = None) -> "ParityCheckMatrix":
        with open(path) as f:
            lines = [ln.split() for ln in f.read().splitlines() if ln.strip()]
        N, M, m = (int(x) for x in lines[0])
        if field is None:
            field = Field(m.bit_length() - 1)
        if field.m != m:
            raise ValueError(f"field order {field.m} does not match file ({m})")
        labels = np.zeros((M, N), dtype=np.int64)
        for j, toks in enumerate(lines[3:3 + N]):
            vals = [int(t) for t in toks]
            for a, b in zip(vals[::2], vals[1::2]):
                if a == 0:
                    continue
                labels[a - 1, j] = field.pow_alpha(b)
        # the per-row section is redundant; verify consistency
        for i, toks in enumerate(lines[3 + N:3 + N + M]):
            vals = [int(t) for t in toks]
            for a, b in zip(vals[::2], vals[1::2]):
                if a == 0:
                    continue
                if labels[i, a - 1] != field.pow_alpha(b):
                    raise ValueError(f"alist row section disagrees at ({i}, {a - 1})")
        return cls(labels, field)


def bipartite_girth(adjacency: np.ndarray) -> int:
    """Shortest cycle length of the Tanner graph; UNREACHED if acyclic."""
    adjacency = np.asarray(adjacency, dtype=bool)
    M, N = adjacency.shape
    adj = [list(N + np.nonzero(adjacency[:, v])[0]) for v in range(N)]
    adj += [list(np.nonzero(adjacency[c, :])[0]) for c in range(M)]
    girth = UNREACHED
    for src in range(N + M):
        dist = {src: 0}
        parent = {src: -1}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            if 2 * dist[u] >= girth - 1:
                break
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    parent[w] = u
                    queue.append(w)
                elif parent[u] != w:
                    girth = min(girth, dist[u] + dist[w] + 1)
    return girth


def expand_peg(base: np.ndarray, n_target: int, field: Field,
               seed) -> ParityCheckMatrix:
    """Lift a base matrix to a labeled parity-check matrix of ~n_target columns.

    The lifting factor is the nearest integer to n_target / n_b (half up);
    the realized length ell * n_b is reported in the metadata and may differ
    from n_target.  Labels are i.i.d. uniform over the nonzero field elements.
    """
    base = np.asarray(base, dtype=np.int64)
    m_b, n_b = base.shape
    if n_target < n_b:
        raise ValueError(f"target length {n_target} below base width {n_b}")
    ell = max(1, _round_half_up(n_target / n_b))
    structure = expand_base(base, ell)
    rng = np.random.default_rng(seed)
    labels = np.where(structure > 0,
                      rng.integers(1, field.m, size=structure.shape), 0)
    pcm = ParityCheckMatrix(labels, field, meta={
        "base": base.tolist(),
        "lifting": ell,
        "n_target": int(n_target),
        "n_realized": int(ell * n_b),
        "seed": seed,
    })
    pcm.meta["girth"] = int(pcm.girth())
    return pcm
