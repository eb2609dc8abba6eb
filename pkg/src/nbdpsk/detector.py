"""MAP symbol detection on a discretized phase grid.

The channel phase is quantized to L levels (L a multiple of the modulation
order m, default 8m).  Forward/backward recursions run over the grid with a
transition kernel that is either an indicator (coherent channel: the
recursion collapses to the BCJR algorithm on the differential trellis) or a
three-point approximation of the wrapped phase-increment density (Wiener
channel): weight 1-P at zero offset and P/2 at +-one grid step.

All recursions are normalized per step; the per-step scale factors are
returned as log-normalizers so the same kernels also evaluate block
log-likelihoods for the information-density benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import ndtr

from .dpsk import Mapping

COHERENT_INDICATOR = "coherent_indicator"
DP_THREE_POINT = "dp_three_point"


class GridMismatch(ValueError):
    """Raised when the grid size is not a multiple of the modulation order."""


@dataclass(frozen=True)
class PhaseGrid:
    """L equidistant phase levels 2*pi*j/L."""

    L: int

    def values(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.L) / self.L

    def for_order(self, m: int) -> int:
        """Grid step per constellation increment; errors if incompatible."""
        if self.L < m or self.L % m:
            raise GridMismatch(f"grid size {self.L} is not a multiple of m={m}")
        return self.L // m


def default_grid(m: int, multiplier: int = 8) -> PhaseGrid:
    return PhaseGrid(L=multiplier * m)


@dataclass(frozen=True)
class TransitionModel:
    """Phase transition kernel on the grid."""

    kind: str = DP_THREE_POINT
    p_delta: float = 0.1

    def __post_init__(self):
        if self.kind not in (COHERENT_INDICATOR, DP_THREE_POINT):
            raise ValueError(f"unknown transition model {self.kind!r}")
        if self.kind == DP_THREE_POINT and not 0.0 < self.p_delta < 1.0:
            raise ValueError("transition probability must be in (0,1)")

    def weights(self) -> tuple[float, float]:
        """(center, side) kernel weights."""
        if self.kind == COHERENT_INDICATOR:
            return 1.0, 0.0
        return 1.0 - self.p_delta, self.p_delta / 2.0

    @property
    def pinned_reference(self) -> bool:
        """Coherent detection knows the reference phase is exactly 0."""
        return self.kind == COHERENT_INDICATOR


def likelihood_table(samples: np.ndarray, grid: PhaseGrid, sigma2: float) -> np.ndarray:
    """p(r_i | psi = 2*pi*j/L) up to a per-row constant; rows rescaled to max 1."""
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    samples = np.asarray(samples, dtype=np.complex128)
    points = np.exp(1j * grid.values())
    expo = np.real(samples[:, None] * points.conj()[None, :]) / sigma2
    expo -= expo.max(axis=1, keepdims=True)
    return np.exp(expo)


def gaussian_kernel_reference(sigma_delta: float, grid: PhaseGrid) -> np.ndarray:
    """Wrapped Gaussian phase-increment density discretized to grid bins.

    Entry j integrates the N(0, sigma_delta^2) density, wrapped modulo 2*pi,
    over the bin of width 2*pi/L centered at 2*pi*j/L.  Validation reference
    for the three-point kernel, not used in the recursions.
    """
    if sigma_delta <= 0.0:
        raise ValueError("sigma_delta must be positive")
    L = grid.L
    centers = grid.values()
    centers = np.where(centers > np.pi, centers - 2.0 * np.pi, centers)
    half = np.pi / L
    wraps = np.arange(-4, 5) * 2.0 * np.pi
    hi = (centers[:, None] + half + wraps[None, :]) / sigma_delta
    lo = (centers[:, None] - half + wraps[None, :]) / sigma_delta
    k = (ndtr(hi) - ndtr(lo)).sum(axis=1)
    return k / k.sum()


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=True)
def _smooth_doubled(row, w0, ws, out2):
    """out2 = two copies of the three-point smoothing of a circular row."""
    L = row.shape[0]
    for x in range(L):
        sl = row[x - 1] if x > 0 else row[L - 1]
        sr = row[x + 1] if x < L - 1 else row[0]
        v = w0 * row[x] + ws * (sl + sr)
        out2[x] = v
        out2[x + L] = v
    return


@njit(cache=True, fastmath=True)
def _forward_pass(lik, prior_phase, d, w0, ws, pinned, alpha, logz):
    n1, L = lik.shape
    m = prior_phase.shape[1]
    if pinned:
        for j in range(L):
            alpha[0, j] = 0.0
        alpha[0, 0] = lik[0, 0]
    else:
        for j in range(L):
            alpha[0, j] = lik[0, j]
    z = 0.0
    for j in range(L):
        z += alpha[0, j]
    if z <= 0.0:
        # only reachable when pinned and lik[0,0] underflowed; the scale of
        # the known reference state is immaterial
        alpha[0, 0] = 1.0
        logz[0] = -745.0
    else:
        logz[0] = np.log(z)
        for j in range(L):
            alpha[0, j] /= z
    sm2 = np.empty(2 * L)
    for i in range(1, n1):
        _smooth_doubled(alpha[i - 1], w0, ws, sm2)
        z = 0.0
        for j in range(L):
            acc = 0.0
            for l in range(m):
                acc += prior_phase[i - 1, l] * sm2[j - l * d + L]
            val = lik[i, j] * acc
            alpha[i, j] = val
            z += val
        if z <= 0.0:
            for j in range(L):
                alpha[i, j] = 1.0 / L
            logz[i] = -745.0  # log of smallest normal double
        else:
            logz[i] = np.log(z)
            for j in range(L):
                alpha[i, j] /= z
    return


@njit(cache=True, fastmath=True)
def _backward_pass(lik, prior_phase, d, w0, ws, beta):
    n1, L = lik.shape
    m = prior_phase.shape[1]
    z = 0.0
    for j in range(L):
        beta[n1 - 1, j] = lik[n1 - 1, j]
        z += lik[n1 - 1, j]
    for j in range(L):
        beta[n1 - 1, j] /= z
    sm2 = np.empty(2 * L)
    for i in range(n1 - 2, -1, -1):
        _smooth_doubled(beta[i + 1], w0, ws, sm2)
        z = 0.0
        for j in range(L):
            acc = 0.0
            for l in range(m):
                acc += prior_phase[i, l] * sm2[j + l * d]
            val = lik[i, j] * acc
            beta[i, j] = val
            z += val
        if z <= 0.0:
            for j in range(L):
                beta[i, j] = 1.0 / L
        else:
            for j in range(L):
                beta[i, j] /= z
    return


@njit(cache=True, fastmath=True)
def _extrinsic_pass(alpha, beta, d, w0, ws, m, ext):
    n1, L = alpha.shape
    sm2 = np.empty(2 * L)
    for i in range(1, n1):
        _smooth_doubled(beta[i], w0, ws, sm2)
        tot = 0.0
        for l in range(m):
            acc = 0.0
            for j in range(L):
                acc += alpha[i - 1, j] * sm2[j + l * d]
            ext[i - 1, l] = acc
            tot += acc
        if tot <= 0.0:
            for l in range(m):
                ext[i - 1, l] = 1.0 / m
        else:
            for l in range(m):
                ext[i - 1, l] /= tot
    return


@njit(cache=True, fastmath=True)
def _forward_logprob(lik, prior_phase, d, w0, ws):
    """Sum of per-step log-normalizers of the forward recursion (unpinned start).

    Equals log p(r) under the grid model, up to the log(1/L) reference-phase
    prior, which is constant and cancels in information densities.
    """
    n1, L = lik.shape
    m = prior_phase.shape[1]
    prev = np.empty(L)
    z = 0.0
    for j in range(L):
        prev[j] = lik[0, j]
        z += prev[j]
    total = np.log(z)
    for j in range(L):
        prev[j] /= z
    sm2 = np.empty(2 * L)
    for i in range(1, n1):
        _smooth_doubled(prev, w0, ws, sm2)
        z = 0.0
        for j in range(L):
            acc = 0.0
            for l in range(m):
                acc += prior_phase[i - 1, l] * sm2[j - l * d + L]
            val = lik[i, j] * acc
            prev[j] = val
            z += val
        if z <= 0.0:
            total += -745.0
            for j in range(L):
                prev[j] = 1.0 / L
        else:
            total += np.log(z)
            for j in range(L):
                prev[j] /= z
    return total


# ---------------------------------------------------------------------------
# workspace and public entry points
# ---------------------------------------------------------------------------

class DetectorWorkspace:
    """Per-frame detector state: likelihood table plus alpha/beta scratch.

    Build once per received frame and call :meth:`extrinsics` on every outer
    iteration; the likelihood table is computed only once.
    """

    def __init__(self, samples: np.ndarray, grid: PhaseGrid, sigma2: float,
                 model: TransitionModel, mapping: Mapping):
        m = mapping.field.m
        self.d = grid.for_order(m)
        self.m = m
        self.grid = grid
        self.model = model
        self.mapping = mapping
        self.lik = likelihood_table(samples, grid, sigma2)
        self.n = self.lik.shape[0] - 1
        self._alpha = np.empty_like(self.lik)
        self._beta = np.empty_like(self.lik)
        self._logz = np.empty(self.n + 1)
        self._ext_phase = np.empty((self.n, m))

    def extrinsics(self, priors_field: np.ndarray) -> np.ndarray:
        """Extrinsic Pmfs over the field symbols, one per transmitted position."""
        priors_field = np.asarray(priors_field, dtype=np.float64)
        if priors_field.shape != (self.n, self.m):
            raise ValueError(
                f"expected priors of shape {(self.n, self.m)}, got {priors_field.shape}"
            )
        prior_phase = np.ascontiguousarray(priors_field[:, self.mapping.inverse])
        w0, ws = self.model.weights()
        _forward_pass(self.lik, prior_phase, self.d, w0, ws,
                      self.model.pinned_reference, self._alpha, self._logz)
        _backward_pass(self.lik, prior_phase, self.d, w0, ws, self._beta)
        _extrinsic_pass(self._alpha, self._beta, self.d, w0, ws, self.m,
                        self._ext_phase)
        return np.ascontiguousarray(self._ext_phase[:, self.mapping.table])


def detect(samples: np.ndarray, priors_field: np.ndarray, model: TransitionModel,
           grid: PhaseGrid, mapping: Mapping, sigma2: float) -> np.ndarray:
    """One-shot detection; see :class:`DetectorWorkspace` for the iterative form."""
    ws = DetectorWorkspace(samples, grid, sigma2, model, mapping)
    return ws.extrinsics(priors_field)


def block_log_likelihood(lik: np.ndarray, prior_phase: np.ndarray, d: int,
                         model: TransitionModel) -> float:
    """log of the grid-model block likelihood sum_paths prod p(r|psi) p_trans P(a).

    Uses a uniform (unpinned) reference phase; the constant log(1/L) prior is
    omitted since information densities only use differences of these values.
    """
    w0, wside = model.weights()
    return float(_forward_logprob(lik, np.ascontiguousarray(prior_phase), d, w0, wside))
