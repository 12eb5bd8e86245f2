"""Flooding-schedule belief propagation with SPA / Min-Sum / Normalized-Min-Sum
check rules, in both the LLR and probability domains.

The scalar node functions (var_llr, chk_spa_llr, chk_ms, chk_nms, chk_p,
var_p) define the math one edge at a time and serve as oracles; ClassicDecoder
is the vectorized production path. bp_decode is a reference loop built
directly on the scalar functions for small graphs.

Schedule per iteration: every VN computes its outgoing messages from the
previous iteration's CN messages, then every CN updates, then a hard decision
is made from the total per-VN belief; decoding stops early when the decision
word has an all-zero syndrome.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import syndrome

LLR_MAX_DEFAULT = 1e3
_TANH_CLIP = 1.0 - 1e-15
_PROB_EPS = 1e-12


@dataclass
class EdgeMessages:
    """Per-edge message state, vn-major edge order."""

    vn_to_cn: np.ndarray
    cn_to_vn: np.ndarray
    domain: str = "llr"  # "llr" or "prob"


@dataclass
class DecodeOutcome:
    decision: np.ndarray
    converged: bool
    iterations_used: int
    per_iteration_bit_errors: np.ndarray
    phase: int = 1

    def __post_init__(self):
        self.per_iteration_bit_errors = np.asarray(
            self.per_iteration_bit_errors, dtype=np.int64)


# ---------------------------------------------------------------------------
# scalar node functions

def var_llr(prior, inputs, exclude):
    """Extrinsic variable-node output: prior + sum of inputs minus inputs[exclude]."""
    return prior + sum(inputs) - inputs[exclude]


def chk_spa_llr(inputs, exclude):
    """Sum-product check output 2*artanh(prod tanh(L_j/2)) over j != exclude."""
    prod = 1.0
    for j, v in enumerate(inputs):
        if j == exclude:
            continue
        prod *= math.tanh(0.5 * v)
    prod = max(-_TANH_CLIP, min(_TANH_CLIP, prod))
    return 2.0 * math.atanh(prod)


def chk_ms(inputs, exclude):
    """Min-Sum check output: min extrinsic magnitude times extrinsic sign product."""
    mag = math.inf
    neg = False
    for j, v in enumerate(inputs):
        if j == exclude:
            continue
        mag = min(mag, abs(v))
        if v < 0:
            neg = not neg
    return -mag if neg else mag


def chk_nms(inputs, exclude, alpha):
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    return alpha * chk_ms(inputs, exclude)


def chk_p(probabilities):
    """Probability that the XOR of independent bits with the given means is 1."""
    prod = 1.0
    for p in probabilities:
        prod *= 1.0 - 2.0 * p
    return (1.0 - prod) / 2.0


def var_p(p1, p2):
    """Combine two independent probability estimates of the same bit."""
    num = p1 * p2
    den = (1.0 - p1) * (1.0 - p2) + num
    if den == 0.0:
        raise ValueError("contradictory certainty: cannot combine 0 with 1")
    return num / den


def llr_to_prob(llr):
    return 1.0 / (1.0 + np.exp(np.clip(llr, -700, 700)))


def prob_to_llr(p):
    p = np.clip(p, 1e-300, 1.0)
    q = np.clip(1.0 - p, 1e-300, 1.0)
    return np.log(q) - np.log(p)


# ---------------------------------------------------------------------------
# reference decode loop on the scalar functions

def bp_decode(graph, channel_word, var_fn, chk_fn, L, domain="llr",
              llr_max=LLR_MAX_DEFAULT, reference=None):
    """Flooding BP using per-edge calls to var_fn/chk_fn. For small graphs.

    var_fn(prior, inputs, exclude) and chk_fn(inputs, exclude) must share
    `domain`. In the probability domain the channel word is still an LLR
    vector; priors are converted internally. `reference` is the transmitted
    word for settling counts (defaults to all-zero).
    """
    if L < 1:
        raise ValueError("iteration limit L must be >= 1")
    vals = np.asarray(getattr(channel_word, "values", channel_word), dtype=float)
    if domain == "llr":
        prior = vals.copy()
        delta = 0.0
    elif domain == "prob":
        prior = llr_to_prob(vals)
        delta = 0.5
    else:
        raise ValueError("domain must be 'llr' or 'prob'")
    if reference is None:
        reference = np.zeros(graph.n, dtype=np.uint8)

    # cn_to_vn[i][a] pairs with vn_adj[i][a]; vn_to_cn[j][b] with cn_adj[j][b]
    cn_to_vn = [[delta] * len(adj) for adj in graph.vn_adj]
    vn_to_cn = [[delta] * len(adj) for adj in graph.cn_adj]
    port_at_cn = [[graph.cn_adj[j].index(i) for j in adj]
                  for i, adj in enumerate(graph.vn_adj)]
    port_at_vn = [[graph.vn_adj[i].index(j) for i in adj]
                  for j, adj in enumerate(graph.cn_adj)]

    settle = []
    decision = np.zeros(graph.n, dtype=np.uint8)
    converged = False
    it = 0
    for it in range(1, L + 1):
        for i in range(graph.n):
            ins = cn_to_vn[i]
            for a, j in enumerate(graph.vn_adj[i]):
                out = var_fn(prior[i], ins, a)
                if domain == "llr":
                    out = max(-llr_max, min(llr_max, out))
                vn_to_cn[j][port_at_cn[i][a]] = out
        for j in range(graph.m):
            ins = vn_to_cn[j]
            for b, i in enumerate(graph.cn_adj[j]):
                cn_to_vn[i][port_at_vn[j][b]] = chk_fn(ins, b)
        for i in range(graph.n):
            if domain == "llr":
                belief = prior[i] + sum(cn_to_vn[i])
                decision[i] = 1 if belief < 0 else 0
            else:
                belief = prior[i]
                for v in cn_to_vn[i]:
                    belief = var_p(belief, v)
                decision[i] = 1 if belief > 0.5 else 0
        settle.append(int(((decision != reference) & ~graph.punctured).sum()))
        if not syndrome(graph, decision).any():
            converged = True
            break
    return DecodeOutcome(decision, converged, it, np.array(settle))


# ---------------------------------------------------------------------------
# vectorized decoder

class ClassicDecoder:
    """Vectorized flooding BP decoder.

    chk_rule: "spa", "ms", "nms" (LLR domain) or "spa-prob" (probability
    domain, used as an independent cross-check of the LLR path).
    """

    def __init__(self, graph, chk_rule="spa", alpha=1.0, L=50,
                 llr_max=LLR_MAX_DEFAULT, harmonize=None):
        if L < 1:
            raise ValueError("iteration limit L must be >= 1")
        if chk_rule not in ("spa", "ms", "nms", "spa-prob"):
            raise ValueError("unknown check rule %r" % (chk_rule,))
        if chk_rule == "nms" and not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        self.graph = graph
        self.ei = graph.edge_index()
        self.chk_rule = chk_rule
        self.alpha = alpha if chk_rule == "nms" else 1.0
        self.L = L
        self.llr_max = llr_max
        self.harmonize = harmonize  # phase2.HarmonizeConfig or None
        self._unpunctured = ~graph.punctured

    def decode(self, channel_word, rng=None, reference=None):
        vals = np.asarray(getattr(channel_word, "values", channel_word),
                          dtype=np.float64)
        if vals.shape != (self.graph.n,):
            raise ValueError("channel word length %d != n=%d"
                             % (vals.size, self.graph.n))
        if reference is None:
            reference = np.zeros(self.graph.n, dtype=np.uint8)
        prob = self.chk_rule == "spa-prob"
        prior = llr_to_prob(vals) if prob else vals.copy()
        ei = self.ei
        theta = np.full(ei.n_edges, 0.5 if prob else 0.0)

        settle = []
        decision = np.zeros(self.graph.n, dtype=np.uint8)
        converged = False
        phase = 1
        it = 0
        p2 = self.harmonize
        total_iters = self.L + (p2.phase2_iterations if p2 is not None else 0)
        for it in range(1, total_iters + 1):
            if it > self.L:
                if phase == 1 and p2.reset_state:
                    theta = np.full(ei.n_edges, 0.5 if prob else 0.0)
                phase = 2
                theta = _harmonize_edges(theta, ei, p2, prob)
            if prob:
                eta, _ = self._vn_phase_prob(prior, theta)
                theta = self._cn_phase_prob(eta)
                _, belief = self._vn_phase_prob(prior, theta)
                decision = (belief > 0.5).astype(np.uint8)
            else:
                eta = self._vn_phase_llr(prior, theta)
                theta = self._cn_phase_llr(eta)
                belief = prior + np.add.reduceat(theta, ei.vn_ptr[:-1])
                decision = (belief < 0).astype(np.uint8)
            settle.append(int(((decision != reference) & self._unpunctured).sum()))
            if not syndrome(self.graph, decision).any():
                converged = True
                break
        return DecodeOutcome(decision, converged, it, np.array(settle), phase=phase)

    # -- LLR domain ---------------------------------------------------------

    def _vn_phase_llr(self, prior, theta):
        ei = self.ei
        tot = prior + np.add.reduceat(theta, ei.vn_ptr[:-1])
        eta = tot[ei.vn_of_edge] - theta
        np.clip(eta, -self.llr_max, self.llr_max, out=eta)
        return eta

    def _cn_phase_llr(self, eta):
        if self.chk_rule == "spa":
            return self._cn_spa(eta)
        out = self._cn_minsum(eta)
        if self.chk_rule == "nms":
            out *= self.alpha
        return out

    def _cn_spa(self, eta):
        ei = self.ei
        t = np.tanh(0.5 * eta[ei.cn_edge])
        np.clip(t, -_TANH_CLIP, _TANH_CLIP, out=t)
        zero = t == 0.0
        nzero = np.add.reduceat(zero.astype(np.int64), ei.cn_ptr[:-1])
        logmag = np.where(zero, 0.0, np.log(np.abs(np.where(zero, 1.0, t))))
        sumlog = np.add.reduceat(logmag, ei.cn_ptr[:-1])
        neg = t < 0
        nneg = np.add.reduceat(neg.astype(np.int64), ei.cn_ptr[:-1])
        cn = ei.cn_of_edge[ei.cn_edge]
        rem_zero = nzero[cn] - zero
        mag = np.exp(sumlog[cn] - logmag)
        sign_neg = (nneg[cn] - neg) % 2 == 1
        prod = np.where(rem_zero > 0, 0.0, np.where(sign_neg, -mag, mag))
        np.clip(prod, -_TANH_CLIP, _TANH_CLIP, out=prod)
        theta_cnmajor = 2.0 * np.arctanh(prod)
        theta = np.empty_like(theta_cnmajor)
        theta[ei.cn_edge] = theta_cnmajor
        return theta

    def _cn_minsum(self, eta):
        ei = self.ei
        x = eta[ei.cn_edge]
        mag = np.abs(x)
        cn = ei.cn_of_edge[ei.cn_edge]
        min1 = np.minimum.reduceat(mag, ei.cn_ptr[:-1])
        pos = np.arange(mag.size)
        cand = np.where(mag == min1[cn], pos, mag.size)
        first = np.minimum.reduceat(cand, ei.cn_ptr[:-1])
        masked = mag.copy()
        masked[first[first < mag.size]] = np.inf
        min2 = np.minimum.reduceat(masked, ei.cn_ptr[:-1])
        ext_mag = np.where(pos == first[cn], min2[cn], min1[cn])
        neg = x < 0
        nneg = np.add.reduceat(neg.astype(np.int64), ei.cn_ptr[:-1])
        sign_neg = (nneg[cn] - neg) % 2 == 1
        theta_cnmajor = np.where(sign_neg, -ext_mag, ext_mag)
        theta = np.empty_like(theta_cnmajor)
        theta[ei.cn_edge] = theta_cnmajor
        return theta

    # -- probability domain --------------------------------------------------

    def _vn_phase_prob(self, prior, theta):
        ei = self.ei
        t = np.clip(theta, _PROB_EPS, 1.0 - _PROB_EPS)
        lp = np.log(t)
        lq = np.log(1.0 - t)
        sp = np.log(np.clip(prior, _PROB_EPS, 1.0)) \
            + np.add.reduceat(lp, ei.vn_ptr[:-1])
        sq = np.log(np.clip(1.0 - prior, _PROB_EPS, 1.0)) \
            + np.add.reduceat(lq, ei.vn_ptr[:-1])
        belief = 1.0 / (1.0 + np.exp(np.clip(sq - sp, -700, 700)))
        ep = sp[ei.vn_of_edge] - lp
        eq = sq[ei.vn_of_edge] - lq
        eta = 1.0 / (1.0 + np.exp(np.clip(eq - ep, -700, 700)))
        return eta, belief

    def _cn_phase_prob(self, eta):
        ei = self.ei
        g = 1.0 - 2.0 * eta[ei.cn_edge]
        zero = g == 0.0
        nzero = np.add.reduceat(zero.astype(np.int64), ei.cn_ptr[:-1])
        logmag = np.where(zero, 0.0, np.log(np.abs(np.where(zero, 1.0, g))))
        sumlog = np.add.reduceat(logmag, ei.cn_ptr[:-1])
        neg = g < 0
        nneg = np.add.reduceat(neg.astype(np.int64), ei.cn_ptr[:-1])
        cn = ei.cn_of_edge[ei.cn_edge]
        rem_zero = nzero[cn] - zero
        mag = np.exp(sumlog[cn] - logmag)
        sign_neg = (nneg[cn] - neg) % 2 == 1
        prod = np.where(rem_zero > 0, 0.0, np.where(sign_neg, -mag, mag))
        theta_cnmajor = (1.0 - prod) / 2.0
        theta = np.empty_like(theta_cnmajor)
        theta[ei.cn_edge] = theta_cnmajor
        return theta


def _harmonize_edges(theta, ei, cfg, prob):
    """Apply per-VN harmonization to CN-to-VN messages (vn-major layout)."""
    from .harmonize import vn_harmonize_array
    vals = prob_to_llr(theta) if prob else theta
    vals = vn_harmonize_array(vals, ei.vn_ptr, cfg)
    return llr_to_prob(vals) if prob else vals
