"""AWGN channel with optional Wiener phase noise, and Eb/N0 bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COHERENT = "coherent"
WIENER = "wiener"


def ebn0_to_sigma2(ebn0_db: float, rate: float, p: int) -> float:
    """Noise variance per complex dimension for unit-energy PSK symbols.

    With E_s = 1 and E_s = rate * p * E_b:  sigma^2 = 1 / (2 * rate * p * 10^(ebn0/10)).
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"code rate must be in (0,1), got {rate}")
    if p < 2:
        raise ValueError(f"field exponent must be >= 2, got {p}")
    return 1.0 / (2.0 * rate * p * 10.0 ** (ebn0_db / 10.0))


@dataclass(frozen=True)
class ChannelParams:
    """Channel configuration; ``sigma_delta_deg`` is the phase-increment std-dev."""

    mode: str = WIENER
    sigma2: float = 1.0
    sigma_delta_deg: float = 0.0

    def __post_init__(self):
        if self.mode not in (COHERENT, WIENER):
            raise ValueError(f"unknown channel mode {self.mode!r}")
        if self.sigma2 <= 0.0:
            raise ValueError("sigma2 must be positive")
        if self.sigma_delta_deg < 0.0:
            raise ValueError("sigma_delta_deg must be non-negative")

    @property
    def sigma_delta(self) -> float:
        """Phase-increment std-dev in radians."""
        return np.deg2rad(self.sigma_delta_deg)

    @classmethod
    def from_ebn0(cls, mode: str, ebn0_db: float, rate: float, p: int,
                  sigma_delta_deg: float = 0.0) -> "ChannelParams":
        return cls(mode=mode, sigma2=ebn0_to_sigma2(ebn0_db, rate, p),
                   sigma_delta_deg=sigma_delta_deg)


@dataclass
class ChannelOutput:
    samples: np.ndarray            # complex, length N+1
    phase_trajectory: np.ndarray = field(default=None, repr=False)  # true theta_i

    def __len__(self):
        return len(self.samples)


def transmit(phases: np.ndarray, params: ChannelParams,
             rng: np.random.Generator, theta0: float | None = None) -> ChannelOutput:
    """r_i = exp(j(phi_i + theta_i)) + n_i with n_i ~ CN(0, 2 sigma^2).

    Wiener mode: theta_0 ~ U[0, 2pi), theta_i = theta_{i-1} + N(0, sigma_delta^2).
    Coherent mode forces theta_i = 0.  The same rng draw order is used in both
    modes, so wiener with sigma_delta = 0 and theta0 = 0 is bit-identical to
    coherent on the same stream.  ``theta0`` overrides the drawn initial phase.
    """
    phases = np.asarray(phases, dtype=np.float64)
    n = len(phases)
    theta0_drawn = rng.uniform(0.0, 2.0 * np.pi)
    if theta0 is None:
        theta0 = theta0_drawn
    increments = rng.normal(0.0, 1.0, size=n - 1)
    if params.mode == COHERENT:
        theta = np.zeros(n)
    else:
        theta = np.empty(n)
        theta[0] = theta0
        theta[1:] = theta0 + np.cumsum(params.sigma_delta * increments)
    noise = params.sigma2 ** 0.5 * (rng.normal(size=n) + 1j * rng.normal(size=n))
    samples = np.exp(1j * (phases + theta)) + noise
    return ChannelOutput(samples=samples, phase_trajectory=theta)
