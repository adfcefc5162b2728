"""Turbulence-vs-eavesdropper analysis for a free-space polarization
QKD receiver.

Simulates Kolmogorov phase screens over the receiver aperture, the
spatial detection-efficiency-mismatch landscape of a four-channel
passive-basis polarization receiver, the faked-state intercept-resend
attack that exploits it, and the PPT-feasibility check that certifies
when observed statistics exclude any intercept-resend strategy.
"""

__version__ = "0.1.0"

from . import attack, cli, optics, receiver, scan, screens, turbmath, witness

__all__ = [
    "attack",
    "cli",
    "optics",
    "receiver",
    "scan",
    "screens",
    "turbmath",
    "witness",
    "__version__",
]
