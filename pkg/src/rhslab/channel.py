"""BPSK/AWGN channel model and channel LLR computation.

All simulations transmit the all-zero codeword (bit 0 -> +1); every decoder
here is symmetric under codeword sign flips, so this loses no generality and
avoids needing an encoder.

LLR convention throughout the package: Lambda = ln((1-p)/p) with
p = Pr(bit = 1), so positive LLR favors bit 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ChannelParams:
    """Operating point of the BPSK/AWGN channel.

    rate is the code rate used to map Eb/N0 to noise variance:
    sigma2 = 1 / (2 * rate * 10^(ebn0_db/10)). For punctured codes, pass the
    rate of whichever normalization convention the experiment uses.
    """

    ebn0_db: float
    rate: float
    sigma2: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("rate must be in (0, 1], got %r" % (self.rate,))
        s2 = 1.0 / (2.0 * self.rate * 10.0 ** (self.ebn0_db / 10.0))
        object.__setattr__(self, "sigma2", s2)


@dataclass
class LlrWord:
    """Channel LLR vector; punctured positions carry exactly 0."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


def transmit_all_zero(graph, params, rng):
    """BPSK samples y_i = +1 + noise for the all-zero codeword.

    Punctured positions are returned as NaN (no channel observation).
    """
    y = 1.0 + math.sqrt(params.sigma2) * rng.standard_normal(graph.n)
    if graph.punctured.any():
        y[graph.punctured] = np.nan
    return y


def llr_init(y, params):
    """Channel LLRs 2*y/sigma2; absent observations (NaN) map to LLR 0."""
    y = np.asarray(y, dtype=np.float64)
    vals = np.where(np.isnan(y), 0.0, 2.0 * y / params.sigma2)
    return LlrWord(vals)


def quantize_llr(word, bits, step=1.0):
    """Symmetric mid-tread uniform quantizer with saturation.

    q(L) = clamp(round(L/step), -(2^(bits-1)-1), 2^(bits-1)-1) * step.
    Idempotent; q(-L) = -q(L).
    """
    if bits < 2:
        raise ValueError("quantizer needs bits >= 2")
    if step <= 0:
        raise ValueError("quantizer step must be positive")
    lim = 2 ** (bits - 1) - 1
    vals = np.asarray(word.values if isinstance(word, LlrWord) else word,
                      dtype=np.float64)
    q = np.clip(np.rint(vals / step), -lim, lim) * step
    return LlrWord(q)
