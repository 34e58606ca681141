"""Streaming detection of reflection/amplification DDoS attacks.

Thin Python veneer over the C++ core: NetFlow v9 parsing, prefix-to-AS
mapping, per-interval traffic sketches, EWMA anomaly detection with
volume/entropy gating, and the deterministic scenario generator.
"""

from ._reflectmon import *  # noqa: F401,F403
from ._reflectmon import __version__  # noqa: F401
