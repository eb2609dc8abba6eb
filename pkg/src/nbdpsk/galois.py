"""GF(2^p) arithmetic and probability-mass-function algebra.

Field elements are plain integers in [0, 2^p); their binary digits are the
polynomial coefficients over GF(2).  Multiplication uses exp/log tables built
from a primitive polynomial.  Pmfs are numpy arrays of length m = 2^p whose
entries are probabilities of the m field elements; the check-node side of the
decoder works on them through the Walsh-Hadamard transform over the field's
additive group (bitwise XOR).
"""

from __future__ import annotations

import numpy as np

# Default primitive polynomials, as bit masks (x^3 + x + 1 -> 0b1011).
DEFAULT_POLYS = {
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011101,
}

PMF_FLOOR = 1e-300  # clamp before element-wise divisions


class NonPrimitivePolynomial(ValueError):
    """Raised when the supplied polynomial does not generate GF(2^p)*."""


class ZeroLabel(ValueError):
    """Raised when a multiplicative permutation is requested for label 0."""


class Field:
    """GF(2^p) with exp/log tables and precomputed index permutations.

    Immutable after construction; a single instance can be shared freely
    across workers.
    """

    def __init__(self, p: int, poly: int | None = None):
        if p < 2:
            raise ValueError(f"field exponent must be >= 2, got {p}")
        if poly is None:
            try:
                poly = DEFAULT_POLYS[p]
            except KeyError:
                raise ValueError(f"no default primitive polynomial for p={p}")
        m = 1 << p
        if not (m < poly < 2 * m):
            raise NonPrimitivePolynomial(
                f"polynomial mask {poly:#b} is not of degree {p}"
            )
        self.p = p
        self.m = m
        self.poly = poly

        # exp/log tables by repeated multiplication with alpha = x.
        exp_table = np.zeros(m - 1, dtype=np.int64)
        log_table = np.full(m, -1, dtype=np.int64)
        x = 1
        for i in range(m - 1):
            if log_table[x] >= 0:
                raise NonPrimitivePolynomial(
                    f"{poly:#b} is not primitive for GF(2^{p}): "
                    f"alpha repeats after {i} powers"
                )
            exp_table[i] = x
            log_table[x] = i
            x <<= 1
            if x & m:
                x ^= poly
        if x != 1:
            raise NonPrimitivePolynomial(
                f"{poly:#b} is not primitive for GF(2^{p}): alpha^{m - 1} != 1"
            )
        self.exp_table = exp_table
        self.log_table = log_table

        # Dense m x m product table and, per nonzero label h, the index
        # permutations used by the pmf operations.
        mul_table = np.zeros((m, m), dtype=np.int64)
        for a in range(1, m):
            la = log_table[a]
            for b in range(1, m):
                mul_table[a, b] = exp_table[(la + log_table[b]) % (m - 1)]
        self.mul_table = mul_table

        inv = np.zeros(m, dtype=np.int64)
        inv[1:] = exp_table[(-log_table[1:]) % (m - 1)]
        self.inv_table = inv

        idx = np.arange(m)
        # perm_mul[h][y] = h^{-1} * y, so that out = in[perm_mul[h]]
        # realizes out[h*x] = in[x].
        self._perm_mul = np.zeros((m, m), dtype=np.int64)
        self._perm_mul_back = np.zeros((m, m), dtype=np.int64)
        for h in range(1, m):
            self._perm_mul[h] = mul_table[inv[h], idx]
            self._perm_mul_back[h] = mul_table[h, idx]
        self._xor_idx = idx[:, None] ^ idx[None, :]

    def __repr__(self):
        return f"Field(p={self.p}, poly={self.poly:#b})"

    def mul(self, a: int, b: int) -> int:
        return int(self.mul_table[a, b])

    def add(self, a: int, b: int) -> int:
        return a ^ b

    def inverse(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("0 has no inverse in GF(2^p)")
        return int(self.inv_table[a])

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inverse(b))

    def pow_alpha(self, k: int) -> int:
        """alpha^k for the primitive element alpha = x."""
        return int(self.exp_table[k % (self.m - 1)])

    def elements(self) -> range:
        return range(self.m)

    def nonzero_elements(self) -> range:
        return range(1, self.m)


# ---------------------------------------------------------------------------
# Pmf algebra.  A Pmf is an array whose last axis has length m; all
# operations broadcast over leading axes.
# ---------------------------------------------------------------------------

def normalize_pmf(w: np.ndarray) -> np.ndarray:
    """Rescale so the last axis sums to 1; all-zero rows become uniform."""
    w = np.asarray(w, dtype=np.float64)
    s = w.sum(axis=-1, keepdims=True)
    m = w.shape[-1]
    out = np.where(s > 0.0, w / np.where(s > 0.0, s, 1.0), 1.0 / m)
    return out


def uniform_pmf(m: int, shape=()) -> np.ndarray:
    return np.full(tuple(shape) + (m,), 1.0 / m)


def delta_pmf(m: int, value: int) -> np.ndarray:
    out = np.zeros(m)
    out[value] = 1.0
    return out


def pmf_permute_mul(w: np.ndarray, h: int, field: Field) -> np.ndarray:
    """Pmf of h*X given the Pmf of X: out[h*x] = in[x]."""
    if h == 0:
        raise ZeroLabel("cannot permute a Pmf by the zero label")
    return np.asarray(w)[..., field._perm_mul[h]]


def pmf_permute_mul_inv(w: np.ndarray, h: int, field: Field) -> np.ndarray:
    """Inverse of :func:`pmf_permute_mul`: out[x] = in[h*x]."""
    if h == 0:
        raise ZeroLabel("cannot permute a Pmf by the zero label")
    return np.asarray(w)[..., field._perm_mul_back[h]]


def pmf_permute_add(w: np.ndarray, t: int) -> np.ndarray:
    """Pmf of X + t (field addition = XOR): out[x] = in[x ^ t]."""
    m = np.asarray(w).shape[-1]
    return np.asarray(w)[..., np.arange(m) ^ t]


def hadamard(w: np.ndarray) -> np.ndarray:
    """Walsh-Hadamard transform over (GF(2^p), +) along the last axis.

    out[y] = sum_x (-1)^{popcount(x & y)} in[x].  Unnormalized, so applying
    it twice multiplies by m.
    """
    w = np.array(w, dtype=np.float64, copy=True)
    m = w.shape[-1]
    if m & (m - 1):
        raise ValueError(f"Hadamard transform needs a power-of-two length, got {m}")
    h = 1
    while h < m:
        head = w.reshape(*w.shape[:-1], -1, 2 * h)
        a = head[..., :h].copy()
        b = head[..., h:].copy()
        head[..., :h] = a + b
        head[..., h:] = a - b
        h *= 2
    return w


def xor_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Direct O(m^2) convolution over the XOR group: out[z] = sum_{x^y=z} a[x] b[y]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m = a.shape[-1]
    out = np.zeros(m)
    for x in range(m):
        for y in range(m):
            out[x ^ y] += a[x] * b[y]
    return out
