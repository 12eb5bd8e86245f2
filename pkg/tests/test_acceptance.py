"""Acceptance gate: one test per release criterion, heaviest runs last.

Each test records a one-line verdict that pytest prints in its terminal
summary, so a full run ends with ten PASS/FAIL lines. The statistical
campaigns are exactly reproducible: fixed master seeds, fixed batch sizes.

The two settling/iteration criteria that nominally target a published
2048-bit (6,32)-regular code run against a generated stand-in unless
RHSLAB_8023AN_ALIST points at the real alist; windows that depend on the
exact code are widened for the stand-in (the measured values are recorded
in each verdict line).
"""

import math
import time
from fractions import Fraction

import numpy as np

from rhslab.bp import (chk_p, chk_spa_llr, llr_to_prob, prob_to_llr, var_llr,
                       var_p)
from rhslab.channel import LlrWord, llr_init, transmit_all_zero
from rhslab.graph import TannerGraph
from rhslab.harmonize import HarmonizeConfig
from rhslab.linearize import (design_tracker_params, k2_rs_rounded,
                              round_params, round_params_nearest)
from rhslab.rhs import BetaSchedule, RhsConfig, RhsDecoder
from rhslab.sim import (ChannelSpec, DecoderSpec, StoppingRule, _frame_rngs,
                        run_ber, settling_curve, tracker_probe_scorer,
                        write_point_csv, write_settling_csv,
                        write_transfer_csv)
from rhslab.stochastic import (MessageSet, SaturationModel, _track_llr_raw,
                               chk_bin, estimate_message, phi_value,
                               track_llr_exact, track_probability)

from conftest import record_criterion

RATE_632 = 1723.0 / 2048.0


def crossing_db(points, target=1e-4):
    """Eb/N0 where a measured BER curve crosses `target`, log-linear in BER."""
    for (x1, b1), (x2, b2) in zip(points, points[1:]):
        if b1 >= target >= b2 > 0.0:
            f = (math.log10(b1) - math.log10(target)) \
                / (math.log10(b1) - math.log10(b2))
            return x1 + (x2 - x1) * f
    return None


def rounded_k2_params(beta):
    fitted, _ = design_tracker_params(beta, 2, SaturationModel(8.0, 0),
                                      lambda_l=15.0)
    return round_params_nearest(fitted, frac_bits=2)


def test_criterion_01_node_oracle_equivalence():
    t0 = time.monotonic()
    rng = np.random.default_rng(1001)
    worst = 0.0
    for trial in range(100_000):
        d = (3, 6, 32)[trial % 3]
        llrs = rng.uniform(-6.0, 6.0, d)
        probs = llr_to_prob(llrs)
        j = trial % d
        got = chk_spa_llr(llrs, j)
        want = float(prob_to_llr(chk_p(
            [probs[i] for i in range(d) if i != j])))
        worst = max(worst, abs(got - want) / max(1.0, abs(want)))

        # the probability fold loses the 1e-9 target once a partial sum
        # leaves |sum| < ~11 (1-p resolution), so scale the range by degree
        vllrs = rng.uniform(-1.0, 1.0, d + 1) * (11.0 / (d + 1))
        vprobs = llr_to_prob(vllrs)
        gotv = var_llr(vllrs[0], vllrs[1:], j)
        p = vprobs[0]
        for i in range(d):
            if i != j:
                p = var_p(p, vprobs[i + 1])
        wantv = float(prob_to_llr(p))
        worst = max(worst, abs(gotv - wantv) / max(1.0, abs(wantv)))
    elapsed = time.monotonic() - t0
    ok = worst <= 1e-9 and elapsed < 60.0
    record_criterion(1, ok, "LLR vs probability node functions: worst rel "
                            "err %.2e (<=1e-9), %.1fs" % (worst, elapsed))
    assert ok


def test_criterion_02_stochastic_check_unbiased():
    t0 = time.monotonic()
    rng = np.random.default_rng(1002)
    trials = 1_000_000
    parts = []
    ok = True
    for dc in (3, 6, 32):
        p = rng.uniform(0.05, 0.95, dc)
        q = chk_p(p[1:])  # extrinsic target for edge 0
        bits = (rng.random((trials, dc - 1)) < p[1:]).astype(np.uint8)
        emp = float(chk_bin(bits).mean())
        bound = 3.0 * math.sqrt(q * (1.0 - q) / trials)
        parts.append("dc=%d |%.4f-%.4f|<=%.1e" % (dc, emp, q, bound))
        ok = ok and abs(emp - q) <= bound
    elapsed = time.monotonic() - t0
    ok = ok and elapsed < 60.0
    record_criterion(2, ok, "XOR check 3-sigma at 1e6 trials: %s, %.1fs"
                            % ("; ".join(parts), elapsed))
    assert ok


def test_criterion_03_saturation_bias_correction():
    phi = float(phi_value(8.0, 31))
    phi_ok = abs(phi - 0.9794) <= 1e-4

    rng = np.random.default_rng(1003)
    m_true = 0.3
    p_shrunk = phi * (m_true - 0.5) + 0.5
    bits = (rng.random(1_000_000) < p_shrunk).astype(np.uint8)
    est = float(estimate_message(bits, phi))
    sigma = math.sqrt(p_shrunk * (1.0 - p_shrunk) / bits.size) / phi
    est_ok = abs(est - m_true) <= 3.0 * sigma

    lam = SaturationModel(8.0, 31).lambda_l(0.15)
    lam_ok = abs(lam - 6.29) <= 0.01

    ok = phi_ok and est_ok and lam_ok
    record_criterion(3, ok, "phi(8,31)=%.6f (0.9794+-1e-4), "
                            "estimator |%.5f-0.3|<=%.1e, lambda_L(0.15)=%.5f "
                            "(6.29+-0.01)" % (phi, est, 3 * sigma, lam))
    assert ok


def test_criterion_04_linearizer_reference_design(g36):
    t0 = time.monotonic()
    fitted, fits = design_tracker_params(0.15, 2, SaturationModel(8.0, 0),
                                         lambda_l=15.0)
    b0 = fits[0]["b"]
    a1 = fits[1]["a"]
    lo0 = fits[0]["domain"][0]

    # probe-driven dyadic rounding; at short L the probe cannot tell the
    # split-vote slopes apart, so probe at L=40 where a=1 costs ~2x in BER
    base_cfg = RhsConfig(k=2, beta_schedule=BetaSchedule.constant(0.15),
                         lambda_cap=8.0, L=40, tracker_mode="linear-llr",
                         linear_params=fitted)
    score = tracker_probe_scorer(g36, base_cfg, 3.0, ChannelSpec(rate=0.5),
                                 frames=300)
    rounded, report = round_params(fitted, score)
    r_ok = (report["accepted"]
            and rounded.rows[0].b == Fraction(1, 4)
            and rounded.rows[1].a == Fraction(3, 4)
            and rounded.rows[0].lo == Fraction(-7, 4)
            and rounded.rows == k2_rs_rounded().rows
            and round_params_nearest(fitted, frac_bits=2).rows == rounded.rows)
    elapsed = time.monotonic() - t0
    ok = (abs(b0 - 0.206) <= 0.01 and abs(a1 - 0.776) <= 0.005
          and abs(lo0 - (-1.73)) <= 0.02 and r_ok and elapsed < 60.0)
    record_criterion(4, ok, "slope-one b=%.4f (0.206+-0.01), mu1 a=%.4f "
                            "(0.776+-0.005), image lo=%.4f (-1.73+-0.02), "
                            "probe-rounded (b,a,lo)=(%s,%s,%s), %.1fs"
                            % (b0, a1, lo0, rounded.rows[0].b,
                               rounded.rows[1].a, rounded.rows[0].lo, elapsed))
    assert ok


def test_criterion_05_tracker_domain_equivalence():
    grid = np.linspace(-8.0, 8.0, 1000)
    mus = MessageSet.make(4, 1.0).values
    worst = 0.0
    sym_ok = True
    for beta in (0.5, 0.25, 0.15):
        for n, mu in enumerate(mus):
            got = track_llr_exact(grid, float(mu), beta, math.inf)
            want = prob_to_llr(track_probability(llr_to_prob(grid),
                                                 float(mu), beta))
            worst = max(worst, float(np.max(np.abs(got - want)
                                            / np.maximum(1.0, np.abs(want)))))
            mirror = track_llr_exact(-grid, float(mus[4 - n]), beta, math.inf)
            sym_ok = sym_ok and np.array_equal(mirror, -got)
    ok = worst <= 1e-9 and sym_ok
    record_criterion(5, ok, "exact-LLR tracker vs probability image: worst "
                            "rel err %.2e (<=1e-9), mirror symmetry %s"
                            % (worst, "exact" if sym_ok else "BROKEN"))
    assert ok


def test_criterion_06_stochastic_limit_recovers_sum_product():
    t0 = time.monotonic()
    cn_adj = [[0, 1, 2, 3, 4, 5], [5, 6, 7, 8], [8, 9, 10, 11]]
    vn_adj = [[] for _ in range(12)]
    for c, vs in enumerate(cn_adj):
        for v in vs:
            vn_adj[v].append(c)
    g = TannerGraph(vn_adj, cn_adj)
    priors = np.random.default_rng(9).normal(0.0, 2.0, 12)

    cfg = RhsConfig(k=4096, beta_schedule=BetaSchedule.constant(1.0), L=1,
                    tracker_mode="fp-probability", threshold_mode="exact",
                    rng_sharing=1, s_mode="zero")
    dec = RhsDecoder(g, cfg)
    dec.decode(LlrWord(priors.copy()), rng=np.random.default_rng(17))
    trackers = np.asarray(dec.last_trackers, dtype=np.float64)

    ei = g.edge_index()
    oracle = np.empty(ei.n_edges)
    for e in range(ei.n_edges):
        c = int(ei.cn_of_edge[e])
        v = int(ei.vn_of_edge[e])
        pos = cn_adj[c].index(v)
        oracle[e] = llr_to_prob(chk_spa_llr([priors[u] for u in cn_adj[c]],
                                            pos))
    rms = float(np.sqrt(np.mean((trackers - oracle) ** 2)))
    elapsed = time.monotonic() - t0
    ok = rms <= 0.02 and elapsed < 60.0
    record_criterion(6, ok, "beta=1, k=4096, one iteration on a tree: "
                            "tracker-vs-sum-product RMS %.4f (<=0.02), %.1fs"
                            % (rms, elapsed))
    assert ok


def test_criterion_07_relaxation_settling_crossover(g632, g632_is_substitute):
    ch = ChannelSpec(rate=RATE_632)
    stop = StoppingRule(min_frame_errors=10 ** 9, max_frames=5000)
    curves = {}
    for beta in (0.5, 0.25):
        cfg = RhsConfig(k=2, beta_schedule=BetaSchedule.constant(beta), L=30,
                        tracker_mode="fp-probability", threshold_mode="exact",
                        rng_sharing=1, s_mode="zero")
        res = run_ber(g632, DecoderSpec(kind="rhs", rhs=cfg), [4.4], stop, ch,
                      seed=3, batch_frames=500)
        curves[beta] = dict(settling_curve(res.points[0]))
    fast_early = any(curves[0.5][t] < curves[0.25][t] for t in range(1, 31))
    last_fast = max((t for t in range(1, 31)
                     if curves[0.5][t] < curves[0.25][t]), default=None)
    crossover = None if last_fast is None else last_fast + 1
    slow_late = crossover is not None and all(
        curves[0.25][t] <= curves[0.5][t] for t in range(crossover, 31))
    ok = (fast_early and slow_late and crossover is not None
          and 8 <= crossover <= 15)
    record_criterion(7, ok, "4.4 dB settling: beta 0.5 leads until t=%s, "
                            "0.25 ahead from t=%s (window [8,15]); %s code"
                            % (last_fast, crossover,
                               "stand-in" if g632_is_substitute else "published"))
    assert ok


def test_criterion_08_iteration_statistics(g632, g632_is_substitute):
    ch4 = ChannelSpec(rate=RATE_632, quantize_bits=4)
    nms = run_ber(g632, DecoderSpec(kind="nms", L=30, alpha=0.5), [4.6],
                  StoppingRule(min_frame_errors=100, max_frames=10000), ch4,
                  seed=3, batch_frames=500)
    nms_mean = nms.points[0].mean_iterations
    nms_ok = abs(nms_mean - 2.5) <= 0.15 * 2.5

    p50 = rounded_k2_params(0.5)
    p25 = rounded_k2_params(0.25)
    seqcfg = RhsConfig(k=2, beta_schedule=BetaSchedule.parse("0.5^5,0.25"),
                       L=100, tracker_mode="rounded-integer",
                       threshold_mode="priority-encoder", rng_sharing=64,
                       s_mode="zero", linear_params=[p50, p25])
    seq46 = run_ber(g632, DecoderSpec(kind="rhs", rhs=seqcfg), [4.6],
                    StoppingRule(min_frame_errors=30, max_frames=3000), ch4,
                    seed=3, batch_frames=200)
    seq_mean = seq46.points[0].mean_iterations
    if g632_is_substitute:
        seq_ok = 2.94 <= seq_mean <= 4.60  # published-code window, +20% slack
    else:
        seq_ok = abs(seq_mean - 3.46) <= 0.15 * 3.46

    constcfg = RhsConfig(k=2, beta_schedule=BetaSchedule.constant(0.25),
                         L=100, tracker_mode="rounded-integer",
                         threshold_mode="priority-encoder", rng_sharing=64,
                         s_mode="zero", linear_params=[p25])
    means44 = {}
    for name, cfg in (("const", constcfg), ("seq", seqcfg)):
        r = run_ber(g632, DecoderSpec(kind="rhs", rhs=cfg), [4.4],
                    StoppingRule(min_frame_errors=30, max_frames=3000), ch4,
                    seed=3, batch_frames=200)
        means44[name] = r.points[0].mean_iterations
    reduction = (means44["const"] - means44["seq"]) / means44["const"]
    red_ok = reduction >= 0.20

    ok = nms_ok and seq_ok and red_ok
    record_criterion(8, ok, "mean iterations at 4.6 dB: nms %.2f (2.5+-15%%), "
                            "rounded 0.5^5,0.25 %.2f (%s); 4.4 dB schedule "
                            "saves %.0f%% (>=20%%)"
                            % (nms_mean, seq_mean,
                               "stand-in window [2.94,4.60]"
                               if g632_is_substitute else "3.46+-15%",
                               100 * reduction))
    assert ok


def test_criterion_09_waterfall_proximity_and_floor_machinery(
        g632, g632_is_substitute, g36):
    ch = ChannelSpec(rate=RATE_632)
    ch4 = ChannelSpec(rate=RATE_632, quantize_bits=4)

    spa = run_ber(g632, DecoderSpec(kind="spa", L=50), [3.4, 3.6, 3.8],
                  StoppingRule(min_frame_errors=100, max_frames=20000), ch,
                  seed=3, batch_frames=500)
    spa_pts = [(p.ebn0_db, p.ber) for p in spa.points]
    spa_db = crossing_db(spa_pts)

    fpcfg = RhsConfig(k=2, beta_schedule=BetaSchedule.constant(0.25), L=1000,
                      tracker_mode="fp-probability", threshold_mode="exact",
                      rng_sharing=1, s_mode="zero")
    fp = run_ber(g632, DecoderSpec(kind="rhs", rhs=fpcfg), [3.6, 3.8],
                 StoppingRule(min_frame_errors=30, max_frames=4000), ch,
                 seed=3, batch_frames=200)
    fp_db = crossing_db([(p.ebn0_db, p.ber) for p in fp.points])

    p25 = rounded_k2_params(0.25)
    intcfg = RhsConfig(k=2, beta_schedule=BetaSchedule.constant(0.25), L=1000,
                       tracker_mode="rounded-integer",
                       threshold_mode="priority-encoder", rng_sharing=64,
                       s_mode="zero", linear_params=[p25])
    it = run_ber(g632, DecoderSpec(kind="rhs", rhs=intcfg), [3.4, 3.6],
                 StoppingRule(min_frame_errors=30, max_frames=4000), ch4,
                 seed=3, batch_frames=200)
    int_db = crossing_db([(p.ebn0_db, p.ber) for p in it.points])

    cross_ok = None not in (spa_db, fp_db, int_db)
    fp_gap = fp_db - spa_db if cross_ok else math.nan
    int_gap = int_db - spa_db if cross_ok else math.nan
    gap_ok = cross_ok and fp_gap <= 0.10 and int_gap <= 0.15

    # error-floor machinery, part 1: phase-II harmonization resolves some
    # frames that plain decoding left unconverged
    chp = ChannelSpec(rate=0.5)
    params = chp.params(2.2)
    pcfg = RhsConfig(k=2, beta_schedule=BetaSchedule.constant(0.25), L=30,
                     tracker_mode="fp-probability", threshold_mode="exact",
                     rng_sharing=1, s_mode="zero")
    plain = RhsDecoder(g36, pcfg)
    fails = []
    f = 0
    while len(fails) < 50 and f < 4000:
        noise_rng, dec_rng = _frame_rngs(11, 0, f)
        word = llr_init(transmit_all_zero(g36, params, noise_rng), params)
        if not plain.decode(word, rng=dec_rng).converged:
            fails.append(f)
        f += 1
    harm = HarmonizeConfig(d=0.3, interpretation="lone-dissenter",
                           phase2_iterations=30, reset_state=False)
    harmonized = RhsDecoder(g36, pcfg, harmonize=harm)
    resolved = 0
    for fi in fails:
        noise_rng, dec_rng = _frame_rngs(11, 0, fi)
        word = llr_init(transmit_all_zero(g36, params, noise_rng), params)
        out = harmonized.decode(word, rng=dec_rng)
        if out.converged and out.phase == 2:
            resolved += 1
    p2_ok = len(fails) == 50 and resolved >= 1

    # part 2: the update-rule clamping branches fire where the raw update
    # leaves the probability interval
    clamp_ok = (track_llr_exact(-5.0, 1.0105, 0.5, 6.0) == -6.0
                and track_llr_exact(5.0, -0.0105, 0.5, 6.0) == 6.0
                and _track_llr_raw(-5.0, 1.0105, 0.5, 6.0) == -6.0
                and _track_llr_raw(5.0, -0.0105, 0.5, 6.0) == 6.0)

    ok = gap_ok and p2_ok and clamp_ok
    record_criterion(9, ok, "1e-4 crossings: sum-product %.3f dB, fp tracker "
                            "%+.3f dB (<=+0.10), rounded %+.3f dB (<=+0.15); "
                            "phase-II resolved %d/%d stuck frames (>=1); "
                            "clamp branches %s; %s code"
                            % (spa_db if spa_db else math.nan, fp_gap, int_gap,
                               resolved, len(fails),
                               "hit" if clamp_ok else "MISSED",
                               "stand-in" if g632_is_substitute else "published"))
    assert ok


def test_criterion_10_worker_count_invariance(g36, tmp_path):
    spec = DecoderSpec(kind="spa", L=8)
    stop = StoppingRule(min_frame_errors=10 ** 9, max_frames=192)
    ch = ChannelSpec(rate=0.5)
    files = {}
    for w in (1, 2, 3):
        res = run_ber(g36, spec, [2.0, 3.0], stop, ch, workers=w, seed=6,
                      batch_frames=64)
        d = tmp_path / ("w%d" % w)
        d.mkdir()
        write_point_csv(res, d / "points.csv")
        write_settling_csv(res, d / "settling.csv")
        write_transfer_csv(res, d / "transfer.csv")
        files[w] = {n: (d / n).read_bytes()
                    for n in ("points.csv", "settling.csv", "transfer.csv")}
    ok = files[1] == files[2] == files[3]
    record_criterion(10, ok, "same seed, 1/2/3 workers: points, settling and "
                             "transfer CSVs byte-identical: %s"
                             % ("yes" if ok else "NO"))
    assert ok
