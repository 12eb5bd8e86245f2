"""Decoder laboratory for LDPC codes: belief-propagation references and the
relaxed half-stochastic decoder family at several idealization levels, plus a
Monte-Carlo harness for BER, settling, and transfer experiments."""

__version__ = "0.1.0"

from .channel import ChannelParams, LlrWord, llr_init, quantize_llr, transmit_all_zero
from .graph import TannerGraph, generate_regular_code, load_alist, parse_alist, save_alist
from .rhs import BetaSchedule, RhsConfig, RhsDecoder, rhs_decode

__all__ = [
    "__version__",
    "BetaSchedule",
    "ChannelParams",
    "LlrWord",
    "RhsConfig",
    "RhsDecoder",
    "TannerGraph",
    "generate_regular_code",
    "llr_init",
    "load_alist",
    "parse_alist",
    "quantize_llr",
    "rhs_decode",
    "save_alist",
    "transmit_all_zero",
]
