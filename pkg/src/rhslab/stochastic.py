"""Node-level building blocks of the relaxed half-stochastic decoder.

A check node exchanges k-bit stochastic messages per iteration; a variable
node turns the k extrinsic bits per edge into one of k+1 discrete estimates
(the message set), feeds that into a per-edge tracker (probability-domain,
exact LLR-domain, or a piecewise-linear LLR approximation), and regenerates
bits by comparing its clamped LLR output against random thresholds.

The saturation model covers the regime where variable-node outputs are
clamped to +-lambda_cap: estimates are rescaled by phi, the tracker state
saturates at +-lambda_L, and saturated values carry their own meaning in the
variable-node sum (the indicator rule in var_out_with_saturation).
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

LLR_HUGE = 700.0  # safe exp() range guard for unbounded LLR work


# ---------------------------------------------------------------------------
# binary check node

def chk_bin(bits):
    """XOR of all inputs."""
    bits = np.asarray(bits)
    return np.bitwise_xor.reduce(bits.astype(np.uint8), axis=-1)


def chk_bin_extrinsic_via_total(all_bits, i):
    """Extrinsic XOR for edge i, computed broadcast-style: total XOR then
    cancel the own bit. Equals chk_bin with input i left out."""
    all_bits = np.asarray(all_bits).astype(np.uint8)
    return np.bitwise_xor(chk_bin(all_bits), all_bits[..., i])


# ---------------------------------------------------------------------------
# message estimation

def estimate_message(bits, phi=1.0):
    """Estimate the underlying message from k received bits.

    phi = 1 gives the plain sample mean; phi < 1 applies the saturation bias
    correction sum/(k*phi) - 1/(2*phi) + 1/2 (which reduces to the mean at
    phi = 1).
    """
    bits = np.asarray(bits)
    k = bits.shape[-1]
    if k < 1:
        raise ValueError("need at least one bit")
    if not 0.0 < phi <= 1.0:
        raise ValueError("phi must be in (0, 1]")
    total = bits.astype(np.float64).sum(axis=-1)
    return total / (k * phi) - 0.5 / phi + 0.5


@dataclass(frozen=True)
class MessageSet:
    """The k+1 values mu_0..mu_k an estimated message can take.

    The upper half is stored as 1 - mu_n (and an even k gets exactly 0.5 in
    the middle), so each pair mirrors around 1/2 up to one float rounding.
    """

    k: int
    phi: float
    values: np.ndarray

    @classmethod
    def make(cls, k, phi=1.0):
        if k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < phi <= 1.0:
            raise ValueError("phi must be in (0, 1]")
        vals = np.empty(k + 1)
        for n in range(k // 2 + 1):
            vals[n] = n / (k * phi) - 0.5 / phi + 0.5
            vals[k - n] = 1.0 - vals[n]
        if k % 2 == 0:
            vals[k // 2] = 0.5
        return cls(k, phi, vals)


# ---------------------------------------------------------------------------
# saturation model

def phi_value(lambda_cap, s):
    """Mean rescaling of a check output when s inputs sit at +-lambda_cap."""
    return (1.0 - 2.0 / (np.exp(lambda_cap) + 1.0)) ** s


@dataclass(frozen=True)
class SaturationModel:
    """Derived constants for decoding with clamped VN outputs.

    s is the assumed number of saturated inputs at each check (0 disables the
    model; s = d_c - 1 is the worst-case heuristic). The tracker clamp points
    p_lo/p_hi and the LLR range lambda_L additionally depend on the relaxation
    factor beta, so they are methods.
    """

    lambda_cap: float
    s: int

    def __post_init__(self):
        if self.lambda_cap <= 0:
            raise ValueError("lambda_cap must be positive")
        if self.s < 0:
            raise ValueError("s must be >= 0")

    @property
    def phi(self):
        return float(phi_value(self.lambda_cap, self.s))

    def p_lo(self, beta):
        return beta / (1.0 - beta) * (0.5 / self.phi - 0.5) if beta < 1.0 \
            else (math.inf if self.s > 0 else 0.0)

    def p_hi(self, beta):
        return 1.0 - self.p_lo(beta)

    def lambda_l(self, beta):
        lo = self.p_lo(beta)
        if lo <= 0.0:
            return math.inf
        if lo >= 0.5:
            return 0.0
        return math.log((1.0 - lo) / lo)


# ---------------------------------------------------------------------------
# trackers

def track_probability(prev, msg, beta, sat=None):
    """Relaxed tracker update in the probability domain.

    Computes (1-beta)*prev + beta*msg clamped to [0, 1]. With a saturation
    model (msg outside [0, 1]) the clamp is what pins the state to exactly 0
    below p_lo under msg = mu_0, and to exactly 1 above p_hi under mu_k.
    """
    prev = np.asarray(prev, dtype=np.float64)
    return np.clip((1.0 - beta) * prev + beta * np.asarray(msg, dtype=np.float64),
                   0.0, 1.0)


def _track_llr_raw(prev, msg, beta, lambda_l):
    prev = np.asarray(prev, dtype=np.float64)
    e = np.exp(np.clip(prev, -LLR_HUGE, LLR_HUGE))
    w = beta * (1.0 - np.asarray(msg, dtype=np.float64) * (e + 1.0))
    num = e + w
    den = 1.0 - w
    safe = (num > 0.0) & (den > 0.0)
    out = np.log(np.where(safe, num, 1.0) / np.where(safe, den, 1.0))
    out = np.where(num <= 0.0, -lambda_l, np.where(den <= 0.0, lambda_l, out))
    return np.clip(out, -lambda_l, lambda_l)


def track_llr_exact(prev, msg, beta, lambda_l=math.inf):
    """Relaxed tracker update carried out directly on LLR values.

    Exact LLR image of track_probability. Updates that would leave [0, 1] in
    probability terms saturate to +-lambda_l. Inputs are canonicalized so the
    symmetry f(L; mu) = -f(-L; 1-mu) holds bitwise (message-set values are
    stored pairwise symmetric).
    """
    prev = np.asarray(prev, dtype=np.float64)
    msg = np.asarray(msg, dtype=np.float64)
    flip = (msg > 0.5) | ((msg == 0.5) & (prev < 0.0))
    pc = np.where(flip, -prev, prev)
    mc = np.where(flip, 1.0 - msg, msg)
    raw = _track_llr_raw(pc, mc, beta, lambda_l)
    out = np.where(flip, -raw, raw)
    return out if out.ndim else float(out)


def track_llr_linear(prev, msg_index, params, dc=None):
    """Piecewise-linear tracker: clamp to the stored domain, apply a*L + b,
    clamp the result to +-lambda_L. Indices above k/2 use the symmetry rule."""
    k = params.k
    if not 0 <= msg_index <= k:
        raise ValueError("message index %d outside 0..%d" % (msg_index, k))
    if msg_index > k // 2:
        return -track_llr_linear(-np.asarray(prev, dtype=np.float64),
                                 k - msg_index, params, dc)
    a, b, lo, hi = params.row_floats(msg_index)
    ll = params.lambda_l_for_dc(dc)
    x = np.clip(np.asarray(prev, dtype=np.float64), lo, hi)
    out = np.clip(a * x + b, -ll, ll)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# stochastic bit generation

def _psi_default(q):
    psi = np.full(q, 0.5)
    psi[0] = 0.25
    return psi


@dataclass
class ThresholdGen:
    """Random threshold source for bit generation.

    mode "exact" draws T = ln((1-U)/U), the LLR image of a uniform
    probability threshold. mode "priority-encoder" models the hardware
    generator: a chain of q biased bits, T = (-1)^S * W where W is the index
    of the first success (W = q remaps to |T| = special_value).
    """

    mode: str = "exact"
    q: int = 9
    psi: np.ndarray = None
    special_value: float = 2.0

    def __post_init__(self):
        if self.mode in ("exact", "exact-llr", "exact-probability"):
            self.mode = "exact"
        elif self.mode != "priority-encoder":
            raise ValueError("unknown threshold mode %r" % (self.mode,))
        if self.mode == "priority-encoder":
            if self.q < 1:
                raise ValueError("q must be >= 1")
            if self.psi is None:
                self.psi = _psi_default(self.q)
            self.psi = np.asarray(self.psi, dtype=np.float64)
            if self.psi.shape != (self.q,):
                raise ValueError("psi must have length q=%d" % self.q)
            if not ((self.psi > 0) & (self.psi <= 1)).all():
                raise ValueError("psi entries must be in (0, 1]")
            self._cdf = np.cumsum(self.pmf())

    def pmf(self):
        """P(W = w) for w = 0..q: psi_{w+1} * prod_{i<=w} (1 - psi_i), with
        the all-fail mass at w = q."""
        fail = np.concatenate(([1.0], np.cumprod(1.0 - self.psi)))
        p = np.empty(self.q + 1)
        p[:self.q] = self.psi * fail[:self.q]
        p[self.q] = fail[self.q]
        return p

    def draw(self, rng, shape=()):
        if self.mode == "exact":
            u = rng.random(shape)
            with np.errstate(divide="ignore"):
                return np.log((1.0 - u) / np.where(u == 0.0, 1.0, u)) \
                    + np.where(u == 0.0, np.inf, 0.0)
        u = rng.random(shape)
        w = np.searchsorted(self._cdf, u, side="right").astype(np.float64)
        mag = np.where(w >= self.q, self.special_value, w)
        sign = np.where(rng.random(shape) < 0.5, 1.0, -1.0)
        return sign * mag


def gen_threshold(gen, rng):
    """One threshold draw."""
    return float(gen.draw(rng, ()))


def gen_bits(vn_output, k, gen, rng):
    """k stochastic bits for one edge: X_j = 1 iff vn_output < T_j.

    Low LLR means high probability of bit 1, so the comparison is reversed
    relative to the probability domain. Ties produce bit 0.
    """
    t = gen.draw(rng, (k,))
    return (np.asarray(vn_output, dtype=np.float64) < t).astype(np.uint8)


# ---------------------------------------------------------------------------
# VN output with saturation indicators

def var_out_with_saturation(prior, trackers, exclude, lambda_l, lambda_cap):
    """Extrinsic VN output when tracker values can be saturated.

    Saturated inputs (at +-lambda_l) vote through their indicator sum: a
    positive balance forces +lambda_cap, negative forces -lambda_cap, and a
    zero balance falls back to the ordinary extrinsic sum clamped to
    +-lambda_cap.
    """
    t = np.asarray(trackers, dtype=np.float64)
    ind = np.where(t >= lambda_l, 1, np.where(t <= -lambda_l, -1, 0))
    s = int(ind.sum() - ind[exclude])
    if s > 0:
        return lambda_cap
    if s < 0:
        return -lambda_cap
    out = prior + t.sum() - t[exclude]
    return float(np.clip(out, -lambda_cap, lambda_cap))


# ---------------------------------------------------------------------------
# linear tracker parameters and their file format

@dataclass(frozen=True)
class TransferRow:
    """One mu_n transfer: f(L) = a*L + b on the clamped domain [lo, hi]."""

    a: Fraction
    b: Fraction
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("empty domain [%s, %s]" % (self.lo, self.hi))


@dataclass
class LinearTrackerParams:
    """Linear tracker design for one (k, beta) point.

    rows[n] holds the transfer for mu_n, n = 0..k//2; larger indices are
    reconstructed by symmetry and never stored. lambda_l bounds the tracker
    range; lambda_l_by_dc overrides it per check-node degree when the
    saturation model is active. All numbers are exact rationals so files
    round-trip bit-exactly.
    """

    k: int
    beta: Fraction
    rows: list
    lambda_l: Fraction
    lambda_l_by_dc: dict = field(default_factory=dict)
    provenance: str = "fitted"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(self.rows) != self.k // 2 + 1:
            raise ValueError("need %d transfer rows for k=%d, got %d"
                             % (self.k // 2 + 1, self.k, len(self.rows)))
        if self.provenance not in ("fitted", "rounded"):
            raise ValueError("provenance must be 'fitted' or 'rounded'")

    def row_floats(self, n):
        r = self.rows[n]
        return float(r.a), float(r.b), float(r.lo), float(r.hi)

    def lambda_l_for_dc(self, dc=None):
        if dc is not None and dc in self.lambda_l_by_dc:
            return float(self.lambda_l_by_dc[dc])
        return float(self.lambda_l)

    def max_frac_bits(self):
        """Largest power of two needed in any denominator (None if some value
        is not dyadic)."""
        worst = 0
        for r in self.rows:
            for v in (r.a, r.b, r.lo, r.hi):
                d = v.denominator
                if d & (d - 1):
                    return None
                worst = max(worst, d.bit_length() - 1)
        return worst


def _frac(tok):
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError):
        raise ValueError("bad rational %r" % (tok,)) from None


def format_tracker_params(params):
    out = ["k %d" % params.k,
           "beta %s" % params.beta,
           "provenance %s" % params.provenance,
           "lambda_l %s" % params.lambda_l]
    for dc in sorted(params.lambda_l_by_dc):
        out.append("lambda_l_dc %d %s" % (dc, params.lambda_l_by_dc[dc]))
    for n, r in enumerate(params.rows):
        out.append("mu %d a %s b %s lo %s hi %s" % (n, r.a, r.b, r.lo, r.hi))
    return "\n".join(out) + "\n"


def parse_tracker_params(text):
    k = beta = lam = prov = None
    by_dc = {}
    rows = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        try:
            key = toks[0]
            if key == "k":
                k = int(toks[1])
            elif key == "beta":
                beta = _frac(toks[1])
            elif key == "provenance":
                prov = toks[1]
            elif key == "lambda_l":
                lam = _frac(toks[1])
            elif key == "lambda_l_dc":
                by_dc[int(toks[1])] = _frac(toks[2])
            elif key == "mu":
                if toks[2] != "a" or toks[4] != "b" or toks[6] != "lo" or toks[8] != "hi":
                    raise ValueError("bad mu record")
                rows[int(toks[1])] = TransferRow(_frac(toks[3]), _frac(toks[5]),
                                                 _frac(toks[7]), _frac(toks[9]))
            else:
                raise ValueError("unknown key %r" % key)
        except (IndexError, ValueError) as exc:
            raise ValueError("tracker params line %d: %s" % (lineno, exc)) from None
    if k is None or beta is None or lam is None:
        raise ValueError("tracker params missing k, beta, or lambda_l")
    want = list(range(k // 2 + 1))
    if sorted(rows) != want:
        raise ValueError("tracker params must define mu rows %s, found %s"
                         % (want, sorted(rows)))
    return LinearTrackerParams(k=k, beta=beta, rows=[rows[n] for n in want],
                               lambda_l=lam, lambda_l_by_dc=by_dc,
                               provenance=prov or "fitted")


def write_tracker_params(params, path):
    with open(path, "w") as f:
        f.write(format_tracker_params(params))


def read_tracker_params(path):
    with open(path) as f:
        return parse_tracker_params(f.read())


def float_to_fraction(x):
    """Exact decimal-text fraction for a float; round-trips via float()."""
    return Fraction(repr(float(x)))
