"""The relaxed half-stochastic decoder.

Each iteration exchanges k stochastic bits per edge. Variable nodes form
per-edge LLR outputs from their trackers and the channel prior, clamp them to
+-lambda_cap, and generate bits by threshold comparison; check nodes XOR the
incoming bits and broadcast, each edge cancelling its own contribution; the
k extrinsic bits per edge are collapsed to one of k+1 message estimates which
drives a relaxed tracker update. The hard decision is the sign of the total
tracker belief per variable node, and decoding stops on a zero syndrome.

Tracker arithmetic is selectable: probability-domain floating point, the
exact LLR-domain update, its fitted piecewise-linear approximation, or the
same linear form on scaled integers (the hardware-shaped variant).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .bp import DecodeOutcome, llr_to_prob, prob_to_llr
from .graph import syndrome
from .harmonize import vn_harmonize_array
from .stochastic import (LLR_HUGE, MessageSet, ThresholdGen, phi_value,
                         track_llr_exact, track_probability)

TRACKER_MODES = ("fp-probability", "exact-llr", "linear-llr", "rounded-integer")
LINEAR_MODES = ("linear-llr", "rounded-integer")


@dataclass
class BetaSchedule:
    """Piecewise-constant relaxation factor: segments of (beta, count).

    The last segment may have count None, meaning "for the rest of time".
    Iterations beyond the declared coverage keep the final segment's beta.
    """

    segments: list

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        self.segments = [(float(b), None if c is None else int(c))
                         for b, c in self.segments]
        for i, (b, c) in enumerate(self.segments):
            if not 0.0 < b <= 1.0:
                raise ValueError("beta %r outside (0, 1]" % (b,))
            if c is None and i != len(self.segments) - 1:
                raise ValueError("only the last segment may be open-ended")
            if c is not None and c < 1:
                raise ValueError("segment counts must be >= 1")

    @classmethod
    def constant(cls, beta):
        return cls([(beta, None)])

    @classmethod
    def parse(cls, text):
        """Parse "0.5^5,0.25" style text (missing count = open-ended)."""
        segs = []
        for part in str(text).split(","):
            part = part.strip()
            if "^" in part:
                b, c = part.split("^", 1)
                segs.append((float(b), int(c)))
            else:
                segs.append((float(part), None))
        return cls(segs)

    def describe(self):
        return ",".join("%g" % b if c is None else "%g^%d" % (b, c)
                        for b, c in self.segments)

    def beta_at(self, t):
        if t < 1:
            raise ValueError("iterations are 1-based")
        left = t
        for b, c in self.segments:
            if c is None or left <= c:
                return b
            left -= c
        return self.segments[-1][0]

    def coverage(self):
        total = 0
        for _b, c in self.segments:
            if c is None:
                return math.inf
            total += c
        return total

    def betas(self):
        seen = []
        for b, _c in self.segments:
            if b not in seen:
                seen.append(b)
        return seen


@dataclass
class RhsConfig:
    k: int
    beta_schedule: BetaSchedule
    lambda_cap: float = 8.0
    s_mode: str = "zero"
    tracker_mode: str = "fp-probability"
    threshold_mode: str = "exact"
    rng_sharing: int = 64
    L: int = 50
    linear_params: object = None
    q: int = None
    psi: object = None
    special_value: float = 2.0
    tracker_bits: int = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.L < 1:
            raise ValueError("iteration limit L must be >= 1")
        if self.lambda_cap <= 0:
            raise ValueError("lambda_cap must be positive")
        if self.s_mode not in ("zero", "dc-minus-1"):
            raise ValueError("unknown s_mode %r" % (self.s_mode,))
        if self.tracker_mode not in TRACKER_MODES:
            raise ValueError("unknown tracker_mode %r" % (self.tracker_mode,))
        if self.rng_sharing < 1:
            raise ValueError("rng_sharing must be >= 1")
        if not isinstance(self.beta_schedule, BetaSchedule):
            self.beta_schedule = BetaSchedule.parse(self.beta_schedule)
        if self.beta_schedule.coverage() < self.L:
            raise ValueError("beta schedule covers %s iterations, L=%d"
                             % (self.beta_schedule.coverage(), self.L))
        if self.tracker_mode in LINEAR_MODES and self.linear_params is None:
            raise ValueError("%s mode requires linear tracker params"
                             % self.tracker_mode)


def _params_list(linear_params):
    if linear_params is None:
        return []
    if isinstance(linear_params, dict):
        return list(linear_params.values())
    if isinstance(linear_params, (list, tuple)):
        return list(linear_params)
    return [linear_params]


class RhsDecoder:
    """Vectorized RHS decoder bound to one graph and one configuration."""

    def __init__(self, graph, config, harmonize=None):
        self.graph = graph
        self.config = config
        self.harmonize = harmonize
        self.ei = graph.edge_index()
        ei = self.ei
        cap = config.lambda_cap
        self._unpunctured = ~graph.punctured

        # saturation constants per edge
        if config.s_mode == "zero":
            self.s_uniform = True
            self.phi_e = 1.0
        else:
            s_e = (ei.cn_deg_of_edge - 1).astype(np.float64)
            self.s_uniform = False
            self.phi_e = phi_value(cap, s_e)

        # message estimate tables
        k = config.k
        if self.s_uniform:
            self._vals = MessageSet.make(k, 1.0).values
            self._val_base = None
        else:
            ve = np.empty((ei.n_edges, k + 1))
            for phi in np.unique(self.phi_e):
                mask = self.phi_e == phi
                ve[mask, :] = MessageSet.make(k, float(phi)).values
            self._vals = ve.ravel()
            self._val_base = np.arange(ei.n_edges, dtype=np.int64) * (k + 1)

        # threshold generator and rng sharing groups
        q = config.q if config.q is not None else int(round(cap)) + 1
        self.tgen = ThresholdGen(mode=config.threshold_mode, q=q,
                                 psi=config.psi,
                                 special_value=config.special_value)
        self.n_groups = -(-graph.n // config.rng_sharing)
        group_of_vn = np.arange(graph.n, dtype=np.int64) % self.n_groups
        self._group_of_edge = group_of_vn[ei.vn_of_edge]

        # per-beta constants
        self._per_beta = {}
        mode = config.tracker_mode
        self._int_mode = mode == "rounded-integer"
        if mode in LINEAR_MODES:
            self._plist = _params_list(config.linear_params)
            for p in self._plist:
                if p.k != k:
                    raise ValueError("tracker params are for k=%d, decoder k=%d"
                                     % (p.k, k))
            if self._int_mode:
                self._setup_integer_grid()
        for b in config.beta_schedule.betas():
            self._per_beta[b] = self._beta_tables(b)
        if self._int_mode:
            self._cap_i = self._to_grid(cap, "lambda_cap")
            if self.tgen.mode == "priority-encoder":
                self._to_grid(config.special_value, "special threshold value")

    # -- construction helpers -------------------------------------------------

    def _params_for_beta(self, beta):
        for p in self._plist:
            if abs(float(p.beta) - beta) <= 1e-9:
                return p
        raise ValueError("no tracker params for beta=%g" % beta)

    def _lambda_for_beta(self, beta):
        """Tracker range bound, per edge where degrees differ."""
        if self.s_uniform:
            return math.inf
        if beta >= 1.0:
            return np.zeros_like(self.phi_e)
        p_lo = beta / (1.0 - beta) * (0.5 / self.phi_e - 0.5)
        safe = np.clip(p_lo, 1e-300, 0.5)
        return np.where(p_lo <= 0.0, np.inf, np.log((1.0 - safe) / safe))

    def _beta_tables(self, beta):
        mode = self.config.tracker_mode
        if mode in ("fp-probability", "exact-llr"):
            lam = self._lambda_for_beta(beta)
            return {"lam": lam, "lam_fp": np.minimum(lam, LLR_HUGE)}
        p = self._params_for_beta(beta)
        k = self.config.k
        a = np.empty(k + 1)
        b = np.empty(k + 1)
        lo = np.empty(k + 1)
        hi = np.empty(k + 1)
        for n in range(k // 2 + 1):
            af, bf, lof, hif = p.row_floats(n)
            a[n], b[n], lo[n], hi[n] = af, bf, lof, hif
            a[k - n], b[k - n] = af, -bf
            lo[k - n], hi[k - n] = -hif, -lof
        if p.lambda_l_by_dc:
            lam = np.array([p.lambda_l_for_dc(dc) for dc in self.ei.cn_deg_of_edge])
        else:
            lam = float(p.lambda_l)
        if not self._int_mode:
            return {"a": a, "b": b, "lo": lo, "hi": hi, "lam": lam}
        sb = self._scale_bits
        den = np.array([r.a.denominator for r in p.rows], dtype=np.int64)
        num = np.array([r.a.numerator for r in p.rows], dtype=np.int64)
        anum = np.empty(k + 1, dtype=np.int64)
        aden = np.empty(k + 1, dtype=np.int64)
        for n in range(k // 2 + 1):
            anum[n] = anum[k - n] = num[n]
            aden[n] = aden[k - n] = den[n]
        scale = 1 << sb
        return {
            "anum": anum, "aden": aden,
            "b": np.rint(b * scale).astype(np.int64),
            "lo": np.rint(lo * scale).astype(np.int64),
            "hi": np.rint(hi * scale).astype(np.int64),
            "lam": np.rint(np.asarray(lam) * scale).astype(np.int64),
        }

    def _setup_integer_grid(self):
        worst = 0
        lam_max = 0.0
        for p in self._plist:
            fb = p.max_frac_bits()
            if fb is None:
                raise ValueError("tracker params contain non-dyadic values; "
                                 "cannot run on integers")
            vals = [p.lambda_l] + list(p.lambda_l_by_dc.values())
            for v in vals:
                d = v.denominator
                if d & (d - 1):
                    raise ValueError("lambda_l %s is not dyadic" % (v,))
                fb = max(fb, d.bit_length() - 1)
                lam_max = max(lam_max, abs(float(v)))
            worst = max(worst, fb)
        self._scale_bits = worst
        needed = int(round(lam_max * (1 << worst)))
        self.tracker_bits = needed.bit_length() + 1
        want = self.config.tracker_bits
        if want is not None and self.tracker_bits > want:
            raise ValueError("params need %d-bit trackers, %d configured"
                             % (self.tracker_bits, want))

    def _to_grid(self, value, what):
        scaled = value * (1 << self._scale_bits)
        if abs(scaled - round(scaled)) > 1e-9:
            raise ValueError("%s %r is not on the 1/%d tracker grid"
                             % (what, value, 1 << self._scale_bits))
        return int(round(scaled))

    # -- decoding -------------------------------------------------------------

    def decode(self, channel_word, rng, reference=None):
        cfg = self.config
        ei = self.ei
        vals = np.asarray(getattr(channel_word, "values", channel_word),
                          dtype=np.float64)
        if vals.shape != (self.graph.n,):
            raise ValueError("channel word length %d != n=%d"
                             % (vals.size, self.graph.n))
        if reference is None:
            reference = np.zeros(self.graph.n, dtype=np.uint8)

        int_mode = self._int_mode
        if int_mode:
            prior = np.rint(vals * (1 << self._scale_bits)).astype(np.int64)
            tr = np.zeros(ei.n_edges, dtype=np.int64)
            cap = self._cap_i
        else:
            prior = vals
            tr = np.zeros(ei.n_edges)
            cap = cfg.lambda_cap
        mode = cfg.tracker_mode
        if mode == "fp-probability":
            p_state = np.full(ei.n_edges, 0.5)

        k = cfg.k
        exact_thresh = self.tgen.mode == "exact"
        settle = []
        decision = np.zeros(self.graph.n, dtype=np.uint8)
        converged = False
        phase = 1
        it = 0
        p2 = self.harmonize
        total_iters = cfg.L + (p2.phase2_iterations if p2 is not None else 0)
        for it in range(1, total_iters + 1):
            beta = cfg.beta_schedule.beta_at(min(it, cfg.L))
            tbl = self._per_beta[beta]
            lam = tbl["lam"]
            if p2 is not None and it > cfg.L:
                if phase == 1 and p2.reset_state:
                    tr = np.zeros_like(tr)
                    if mode == "fp-probability":
                        p_state = np.full(ei.n_edges, 0.5)
                phase = 2
                tr = self._harmonize(tr, p2)
                if mode == "fp-probability":
                    p_state = llr_to_prob(tr)

            # VN phase: per-edge outputs clamped to +-lambda_cap
            tot = np.add.reduceat(tr, ei.vn_ptr[:-1])
            base = prior[ei.vn_of_edge] + tot[ei.vn_of_edge] - tr
            out = np.clip(base, -cap, cap)
            if not self.s_uniform:
                ind = (tr >= lam).astype(np.int8) - (tr <= -lam).astype(np.int8)
                sind = np.add.reduceat(ind.astype(np.int64), ei.vn_ptr[:-1])
                s_ext = sind[ei.vn_of_edge] - ind
                out = np.where(s_ext > 0, cap, np.where(s_ext < 0, -cap, out))

            # stochastic bit exchange
            t_raw = self.tgen.draw(rng, (self.n_groups, k))
            if int_mode and not exact_thresh:
                thr = np.rint(t_raw * (1 << self._scale_bits)).astype(np.int64)
                bits = out[:, None] < thr[self._group_of_edge]
            elif int_mode:
                bits = (out * (1.0 / (1 << self._scale_bits)))[:, None] \
                    < t_raw[self._group_of_edge]
            else:
                bits = out[:, None] < t_raw[self._group_of_edge]
            cn_tot = np.bitwise_xor.reduceat(bits[ei.cn_edge], ei.cn_ptr[:-1],
                                             axis=0)
            extr = cn_tot[ei.cn_of_edge] ^ bits
            n_e = extr.sum(axis=1)

            # tracker update
            if mode == "fp-probability":
                mhat = self._vals[n_e] if self.s_uniform \
                    else self._vals[self._val_base + n_e]
                p_state = track_probability(p_state, mhat, beta)
                tr = prob_to_llr(p_state)
                np.clip(tr, -tbl["lam_fp"], tbl["lam_fp"], out=tr)
            elif mode == "exact-llr":
                mhat = self._vals[n_e] if self.s_uniform \
                    else self._vals[self._val_base + n_e]
                tr = track_llr_exact(tr, mhat, beta, lam)
            elif mode == "linear-llr":
                x = np.clip(tr, tbl["lo"][n_e], tbl["hi"][n_e])
                tr = np.clip(tbl["a"][n_e] * x + tbl["b"][n_e], -lam, lam)
            else:
                x = np.clip(tr, tbl["lo"][n_e], tbl["hi"][n_e])
                tnum = x * tbl["anum"][n_e]
                den = tbl["aden"][n_e]
                y = np.sign(tnum) * ((np.abs(tnum) + (den >> 1)) // den)
                tr = np.clip(y + tbl["b"][n_e], -lam, lam)

            # decision and termination
            belief = prior + np.add.reduceat(tr, ei.vn_ptr[:-1])
            decision = (belief < 0).astype(np.uint8)
            settle.append(int(((decision != reference) & self._unpunctured).sum()))
            if not syndrome(self.graph, decision).any():
                converged = True
                break
        # native-domain tracker state, kept for inspection
        self.last_trackers = p_state if mode == "fp-probability" else tr
        return DecodeOutcome(decision, converged, it, np.array(settle),
                             phase=phase)

    def _harmonize(self, tr, cfg):
        if not self._int_mode:
            return vn_harmonize_array(tr, self.ei.vn_ptr, cfg)
        # snap the offset to the tracker grid, at least one step
        d_i = max(1, int(round(cfg.d * (1 << self._scale_bits))))
        icfg = type(cfg)(d=float(d_i), interpretation=cfg.interpretation,
                         phase2_iterations=cfg.phase2_iterations,
                         reset_state=cfg.reset_state)
        out = vn_harmonize_array(tr.astype(np.float64), self.ei.vn_ptr, icfg)
        return np.rint(out).astype(np.int64)


def rhs_decode(graph, channel_word, config, rng, reference=None):
    """One-shot decode; builds a decoder and runs a single frame."""
    return RhsDecoder(graph, config).decode(channel_word, rng,
                                            reference=reference)
