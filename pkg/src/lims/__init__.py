"""Multipath super-resolution for spread-spectrum correlator outputs.

Library layout:

``signal_model``   PN code generation and ACF models
``channel``        power-delay profiles and channel realizations
``observation``    correlator observations with correlated noise
``estimator``      the iterative least-squares multipath estimator
``discriminator``  early-late and generalized discriminators, DLL baseline
``crb``            Cramer-Rao bound on the first-arrival delay
``harness``        Monte-Carlo experiment driver (see also the CLI)
"""

from ._backend import BACKEND
from .estimator import Estimate, LimsConfig, run, track

__all__ = ["BACKEND", "Estimate", "LimsConfig", "run", "track"]
__version__ = "0.1.0"
