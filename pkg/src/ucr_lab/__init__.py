"""Numerical laboratory for uniform common randomness over noisy channels.

Modules
-------
source        joint sources, types and joint typicality
spectrum      channels, information density spectra, transmission codes
capacity      single-letter bounds max I(U;X) s.t. I(U;X) - I(U;Y) <= budget
protocol      binned-codebook key agreement simulation
converse_lab  exact checks of the converse inequalities
cli           the ``ucr-lab`` command
"""

from .capacity import AuxiliaryChannel, BoundResult, cr_bound, epsilon_ucr_bounds
from .converse_lab import ConverseConstants, HypothesisError, constants
from .protocol import Codebook, ProtocolConfig, ProtocolResult, run_protocol
from .source import JointSource, joint_type, sample_pairs
from .spectrum import IID, CustomPerN, Memoryless, Mixed, PerN, SpectrumEstimate, estimate_spectrum, thresholds_from_spectrum

__version__ = "0.1.0"

__all__ = [
    "AuxiliaryChannel",
    "BoundResult",
    "Codebook",
    "ConverseConstants",
    "CustomPerN",
    "HypothesisError",
    "IID",
    "JointSource",
    "Memoryless",
    "Mixed",
    "PerN",
    "ProtocolConfig",
    "ProtocolResult",
    "SpectrumEstimate",
    "constants",
    "cr_bound",
    "epsilon_ucr_bounds",
    "estimate_spectrum",
    "joint_type",
    "run_protocol",
    "sample_pairs",
    "thresholds_from_spectrum",
]
