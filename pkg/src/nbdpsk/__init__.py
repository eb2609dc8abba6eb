"""Non-binary LDPC coded m-ary DPSK over AWGN channels with Wiener phase noise.

Library layout (one module per subsystem):

- :mod:`nbdpsk.galois`     GF(2^p) arithmetic and Pmf algebra
- :mod:`nbdpsk.protograph` base matrices, candidate search space, circulant PEG
- :mod:`nbdpsk.codec`      non-binary LDPC encoder / BP decoder
- :mod:`nbdpsk.dpsk`       mapping, interleaving, adapters, differential modulation
- :mod:`nbdpsk.channel`    AWGN + Wiener phase-noise simulation
- :mod:`nbdpsk.detector`   discretized-phase forward/backward detector
- :mod:`nbdpsk.receiver`   turbo loop and CER campaigns
- :mod:`nbdpsk.ensemble`   Monte Carlo density evolution and protograph search
- :mod:`nbdpsk.bounds`     information rate and dependency-testing benchmarks
- :mod:`nbdpsk.cli`        command-line front end
"""

__version__ = "0.1.0"

from .galois import Field
from .dpsk import Mapping

__all__ = ["Field", "Mapping", "__version__"]
