"""Non-binary LDPC encoding and belief-propagation decoding.

The decoder keeps probability-domain messages on the Tanner-graph edges and
runs one flooding iteration per call (all check nodes, then all variable
nodes), matching the turbo schedule where the detector is consulted between
decoder iterations.  Check nodes work in the Walsh-Hadamard domain: incoming
messages are permuted through their edge labels, transformed, multiplied
leave-one-out, and transformed back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .galois import PMF_FLOOR, Field, hadamard, normalize_pmf
from .protograph import ParityCheckMatrix


class LengthMismatch(ValueError):
    """Raised when an info word does not match the code dimension."""


def loo_products(stack: np.ndarray) -> np.ndarray:
    """Leave-one-out products along axis -2 via prefix/suffix sweeps."""
    d = stack.shape[-2]
    left = np.ones_like(stack)
    right = np.ones_like(stack)
    for k in range(1, d):
        left[..., k, :] = left[..., k - 1, :] * stack[..., k - 1, :]
    for k in range(d - 2, -1, -1):
        right[..., k, :] = right[..., k + 1, :] * stack[..., k + 1, :]
    return left * right


def gf_rref(labels: np.ndarray, field: Field):
    """Reduced row echelon form over GF(m).  Returns (rref, pivot_columns)."""
    R = np.asarray(labels, dtype=np.int64).copy()
    M, N = R.shape
    mul = field.mul_table
    pivots = []
    r = 0
    for col in range(N):
        rows = np.nonzero(R[r:, col])[0]
        if rows.size == 0:
            continue
        sel = r + int(rows[0])
        if sel != r:
            R[[r, sel]] = R[[sel, r]]
        inv = field.inv_table[R[r, col]]
        R[r] = mul[inv, R[r]]
        factor = R[:, col].copy()
        factor[r] = 0
        R ^= mul[factor[:, None], R[r][None, :]]
        pivots.append(col)
        r += 1
        if r == M:
            break
    return R[:r], np.array(pivots, dtype=np.int64)


class Code:
    """A parity-check matrix plus a systematic encoder derived from it.

    The encoder comes from Gaussian elimination over GF(m); pivot columns
    carry parity, the remaining (systematic) columns carry the info symbols.
    Rank deficiency is tolerated: K = N - rank(H).
    """

    def __init__(self, pcm: ParityCheckMatrix):
        self.pcm = pcm
        self.field = pcm.field
        self.n = pcm.n_vars
        rref, pivots = gf_rref(pcm.labels, pcm.field)
        self.rank = len(pivots)
        self.k = self.n - self.rank
        self.pivot_cols = pivots
        mask = np.ones(self.n, dtype=bool)
        mask[pivots] = False
        self.info_cols = np.nonzero(mask)[0]
        self._parity_map = rref[:, self.info_cols]

    @property
    def rate(self) -> float:
        return self.k / self.n

    def encode(self, u: np.ndarray) -> np.ndarray:
        """Codeword with u on the systematic positions; H v^T = 0 by construction."""
        u = np.asarray(u, dtype=np.int64)
        if u.shape != (self.k,):
            raise LengthMismatch(f"expected {self.k} info symbols, got {u.shape}")
        v = np.zeros(self.n, dtype=np.int64)
        v[self.info_cols] = u
        if self.rank:
            prods = self.field.mul_table[self._parity_map, u[None, :]]
            v[self.pivot_cols] = np.bitwise_xor.reduce(prods, axis=1)
        return v

    def syndrome_ok(self, v: np.ndarray) -> bool:
        v = np.asarray(v, dtype=np.int64)
        rows, cols, labels = self.pcm.triplets()
        syn = np.zeros(self.pcm.n_checks, dtype=np.int64)
        np.bitwise_xor.at(syn, rows, self.field.mul_table[labels, v[cols]])
        return not syn.any()


@dataclass
class DecoderState:
    """Per-frame check-to-variable messages, edge-indexed; persists across
    the outer turbo iterations (uniform before the first check update)."""

    c2v: np.ndarray


class Decoder:
    """Flooding BP with Fourier-domain check nodes on a fixed parity-check matrix."""

    def __init__(self, pcm: ParityCheckMatrix):
        self.pcm = pcm
        self.field = pcm.field
        m = self.field.m
        rows, cols, labels = pcm.triplets()
        self.rows, self.cols, self.labels = rows, cols, labels
        self.n_edges = len(rows)
        self.n_vars = pcm.n_vars
        self.n_checks = pcm.n_checks

        # label permutations: edge message about v -> message about w = h*v
        self._to_syndrome = self.field._perm_mul[labels]        # (E, m)
        self._from_syndrome = self.field._perm_mul_back[labels]  # (E, m)

        self._cn_idx, self._cn_mask = self._grouped(rows, self.n_checks)
        self._vn_idx, self._vn_mask = self._grouped(cols, self.n_vars)

    def _grouped(self, keys, n_groups):
        """Padded (n_groups, d_max) edge-index table; padding points at a
        sentinel edge that always holds all-ones messages."""
        order = np.argsort(keys, kind="stable")
        counts = np.bincount(keys, minlength=n_groups)
        d_max = int(counts.max())
        idx = np.full((n_groups, d_max), self.n_edges, dtype=np.int64)
        mask = np.zeros((n_groups, d_max), dtype=bool)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        for g in range(n_groups):
            c = counts[g]
            idx[g, :c] = order[starts[g]:starts[g] + c]
            mask[g, :c] = True
        return idx, mask

    def new_state(self) -> DecoderState:
        return DecoderState(c2v=np.full((self.n_edges, self.field.m),
                                        1.0 / self.field.m))

    def _gather(self, edge_msgs, idx):
        padded = np.concatenate([edge_msgs, np.ones((1, edge_msgs.shape[1]))])
        return padded[idx]

    def cn_update(self, v2c: np.ndarray) -> np.ndarray:
        """Check-to-variable messages from the current variable-to-check ones."""
        m = self.field.m
        w = np.take_along_axis(v2c, self._to_syndrome, axis=1)
        f = hadamard(w)
        stack = self._gather(f, self._cn_idx)
        prods = loo_products(stack)
        f_out = np.empty_like(v2c)
        f_out[self._cn_idx[self._cn_mask]] = prods[self._cn_mask]
        msg_w = np.maximum(hadamard(f_out) / m, 0.0)
        c2v = np.take_along_axis(msg_w, self._from_syndrome, axis=1)
        return normalize_pmf(c2v)

    def bp_iteration(self, state: DecoderState, priors: np.ndarray):
        """One flooding iteration: variable updates with the fresh priors,
        then check updates, then APP from the fresh check messages.

        ``priors`` holds one normalized Pmf per variable node.  The extrinsic
        output is the element-wise ratio app / prior, renormalized.
        """
        priors = np.asarray(priors, dtype=np.float64)
        stack = self._gather(state.c2v, self._vn_idx)
        prods = loo_products(stack)
        v2c = np.empty_like(state.c2v)
        v2c[self._vn_idx[self._vn_mask]] = prods[self._vn_mask]
        v2c *= priors[self.cols]
        v2c = normalize_pmf(v2c)

        state.c2v = self.cn_update(v2c)

        stack = self._gather(state.c2v, self._vn_idx)
        app = normalize_pmf(priors * np.prod(stack, axis=1))
        ext = normalize_pmf(app / np.maximum(priors, PMF_FLOOR))
        return app, ext

    def decode(self, priors: np.ndarray, iterations: int):
        """Standalone multi-iteration decode (for unit tests and direct use)."""
        state = self.new_state()
        app = np.asarray(priors, dtype=np.float64)
        for _ in range(iterations):
            app, _ = self.bp_iteration(state, priors)
        return hard_decision(app, self.pcm)


def hard_decision(app: np.ndarray, pcm: ParityCheckMatrix):
    """Per-symbol argmax (ties to the smallest label) plus a syndrome check."""
    app = np.asarray(app)
    decided = np.argmax(app, axis=1).astype(np.int64)
    rows, cols, labels = pcm.triplets()
    syn = np.zeros(pcm.n_checks, dtype=np.int64)
    np.bitwise_xor.at(syn, rows, pcm.field.mul_table[labels, decided[cols]])
    return decided, not syn.any()
