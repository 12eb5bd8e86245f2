"""Post-convergence-failure message harmonization.

When ordinary decoding stalls (typically on a small set of mutually
reinforcing messages), a second phase nudges each variable node's incoming
messages toward agreement: if exactly one input disagrees in sign with all
the others, every other input is moved by a constant d toward the dissenter's
sign. Ties (equal sign counts) are left alone, and the dissenting message
itself is never modified.

Two guard interpretations are provided. "lone-dissenter" (default) acts when
the minority sign set has exactly one member. "strict-singleton" acts only
when the *majority* set is the singleton, which is unsatisfiable for variable
degrees >= 3 and therefore a no-op on practical codes; it is kept selectable
for the record.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class HarmonizeConfig:
    d: float = 0.3
    interpretation: str = "lone-dissenter"
    phase2_iterations: int = 50
    reset_state: bool = False

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("offset d must be >= 0")
        if self.interpretation not in ("lone-dissenter", "strict-singleton"):
            raise ValueError("unknown interpretation %r" % (self.interpretation,))
        if self.phase2_iterations < 0:
            raise ValueError("phase2_iterations must be >= 0")


def vn_harmonize(inputs, config):
    """Harmonize one VN's input list. Returns a new list."""
    vals = np.asarray(inputs, dtype=np.float64)
    out = vn_harmonize_array(vals, np.array([0, vals.size]), config)
    return list(out)


def vn_harmonize_array(values, vn_ptr, config):
    """Vectorized harmonization across many VNs.

    values holds every VN's inputs concatenated (vn-major); vn_ptr are the
    segment boundaries. Returns the adjusted copy.
    """
    vals = np.asarray(values, dtype=np.float64)
    if config.d == 0.0:
        return vals.copy()
    pos = vals >= 0.0
    starts = vn_ptr[:-1]
    npos = np.add.reduceat(pos.astype(np.int64), starts)
    deg = np.diff(vn_ptr)
    nneg = deg - npos
    if config.interpretation == "lone-dissenter":
        push_up = (npos == 1) & (nneg >= 2)    # dissenter positive
        push_dn = (nneg == 1) & (npos >= 2)    # dissenter negative
    else:
        # literal reading: the larger sign set must be a singleton, which
        # forces the other set empty; there is then nothing to move
        push_up = np.zeros(deg.shape, dtype=bool)
        push_dn = np.zeros(deg.shape, dtype=bool)
    seg = np.repeat(np.arange(deg.size), deg)
    out = vals.copy()
    out += np.where(push_up[seg] & ~pos, config.d, 0.0)
    out -= np.where(push_dn[seg] & pos, config.d, 0.0)
    return out


def two_phase_decode(graph, channel_word, decoder, config, rng=None,
                     reference=None):
    """Run a decoder with harmonization enabled for its second phase.

    The decoder runs its configured iteration budget as phase 1; on failure
    it continues for config.phase2_iterations more with vn_harmonize applied
    to each VN's inputs at the start of every iteration. The outcome's phase
    field reports where decoding ended.
    """
    saved = decoder.harmonize
    decoder.harmonize = config
    try:
        return decoder.decode(channel_word, rng=rng, reference=reference)
    finally:
        decoder.harmonize = saved
