"""Symbol interleaving, field-to-PSK mapping, differential modulation, adapters.

The transmit chain is: codeword -> (+ adapter sequence) -> interleave ->
map each symbol to a phase increment on the m-PSK grid -> accumulate phases.
The accumulator emits N+1 phases, the first being the reference phase 0.
"""

from __future__ import annotations

import numpy as np

from .galois import Field


def gray_label(l: int) -> int:
    """Binary-reflected Gray label of phase index l."""
    return l ^ (l >> 1)


class Mapping:
    """Bijection between field elements and phase indices l in {0..m-1}.

    ``table[element] = l`` with constellation point exp(2j*pi*l/m).  The
    built-in maps place the binary label of the field element on the Gray
    code of the phase index, so adjacent constellation points differ in one
    bit; element 0 sits at phase 0.
    """

    def __init__(self, field: Field, table):
        table = np.asarray(table, dtype=np.int64)
        if table.shape != (field.m,):
            raise ValueError(f"mapping table must have length {field.m}")
        if sorted(table.tolist()) != list(range(field.m)):
            raise ValueError("mapping table is not a bijection onto all phases")
        self.field = field
        self.table = table
        self.inverse = np.zeros(field.m, dtype=np.int64)
        self.inverse[table] = np.arange(field.m)

    @classmethod
    def gray(cls, field: Field) -> "Mapping":
        """The standard map for this scheme: element with label gray(l) -> phase l."""
        m = field.m
        table = np.zeros(m, dtype=np.int64)
        for l in range(m):
            table[gray_label(l)] = l
        return cls(field, table)

    def phase_indices(self, symbols) -> np.ndarray:
        return self.table[np.asarray(symbols, dtype=np.int64)]

    def symbols(self, phase_indices) -> np.ndarray:
        return self.inverse[np.asarray(phase_indices, dtype=np.int64)]

    def save(self, path):
        """Write as lines ``<exponent> <phase-index>`` (-1 for the zero element)."""
        log = self.field.log_table
        with open(path, "w") as f:
            for value in range(self.field.m):
                exp = -1 if value == 0 else int(log[value])
                f.write(f"{exp} {int(self.table[value])}\n")

    @classmethod
    def load(cls, path, field: Field) -> "Mapping":
        table = np.full(field.m, -1, dtype=np.int64)
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                exp_s, idx_s = line.split()
                exp, idx = int(exp_s), int(idx_s)
                value = 0 if exp == -1 else field.pow_alpha(exp)
                table[value] = idx
        if (table < 0).any():
            raise ValueError("mapping file does not cover all field elements")
        return cls(field, table)


class Interleaver:
    """Random symbol permutation; ``apply`` maps codeword order to channel order."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.perm = rng.permutation(n)
        self._inv = np.argsort(self.perm)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.perm]

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self._inv]


class AdapterSequence:
    """Per-position field symbols added to the codeword to symmetrize the channel."""

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=np.int64)

    @classmethod
    def draw(cls, n: int, field: Field, rng: np.random.Generator) -> "AdapterSequence":
        return cls(rng.integers(0, field.m, size=n))

    @classmethod
    def zero(cls, n: int) -> "AdapterSequence":
        return cls(np.zeros(n, dtype=np.int64))

    def __len__(self):
        return len(self.values)


def apply_adapter(v: np.ndarray, t: AdapterSequence) -> np.ndarray:
    """w_i = v_i + t_i over GF(2^p); applying twice is the identity."""
    v = np.asarray(v, dtype=np.int64)
    if len(v) != len(t):
        raise ValueError("codeword and adapter lengths differ")
    return v ^ t.values


def deadapt_pmfs(pmfs: np.ndarray, t: AdapterSequence) -> np.ndarray:
    """Per-position intra-Pmf permutation undoing (or redoing) the adapter.

    Row i becomes ``pmf_permute_add(pmfs[i], t_i)``, i.e. out[i, x] = in[i, x ^ t_i].
    """
    pmfs = np.asarray(pmfs)
    if pmfs.shape[0] != len(t):
        raise ValueError("pmf count and adapter length differ")
    m = pmfs.shape[1]
    idx = np.arange(m)[None, :] ^ t.values[:, None]
    return np.take_along_axis(pmfs, idx, axis=1)


def modulate(w: np.ndarray, interleaver: Interleaver, mapping: Mapping) -> np.ndarray:
    """Interleave, map to phase increments, accumulate.  Returns N+1 phases in radians.

    phases[0] = 0 is the reference symbol; phases[i] = phases[i-1] + 2*pi*l_i/m
    modulo 2*pi, with l_i the phase index of the i-th interleaved symbol.
    """
    c = interleaver.apply(w)
    m = mapping.field.m
    incr = mapping.phase_indices(c)
    idx = np.concatenate([[0], np.cumsum(incr) % m])
    return 2.0 * np.pi * idx / m
