"""Monte-Carlo simulation harness.

Produces BER/FER points with confidence intervals, per-iteration settling
data, transfer curves, iteration statistics, and the two-segment relaxation
schedule search. Frames are distributed over worker processes in fixed-size
batches; every frame derives its noise and decoder randomness from the master
seed and its own frame index, and stopping decisions are evaluated on batch
boundaries in index order, so results are bit-identical for any worker count.
"""

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bp import ClassicDecoder
from .channel import ChannelParams, llr_init, quantize_llr, transmit_all_zero
from .rhs import RhsConfig, RhsDecoder


@dataclass
class ChannelSpec:
    """Channel side of an experiment: rate for the Eb/N0 mapping plus
    optional channel-output quantization."""

    rate: float
    quantize_bits: int = None
    quantize_step: float = 1.0

    def params(self, ebn0_db):
        return ChannelParams(ebn0_db=ebn0_db, rate=self.rate)


@dataclass
class DecoderSpec:
    """Picklable recipe for building a decoder inside a worker."""

    kind: str  # spa | ms | nms | spa-prob | rhs
    L: int = 50
    alpha: float = 1.0
    llr_max: float = 1e3
    rhs: RhsConfig = None
    harmonize: object = None

    def __post_init__(self):
        if self.kind not in ("spa", "ms", "nms", "spa-prob", "rhs"):
            raise ValueError("unknown decoder kind %r" % (self.kind,))
        if self.kind == "rhs" and self.rhs is None:
            raise ValueError("rhs decoder needs an RhsConfig")

    def build(self, graph):
        if self.kind == "rhs":
            return RhsDecoder(graph, self.rhs, harmonize=self.harmonize)
        return ClassicDecoder(graph, chk_rule=self.kind, alpha=self.alpha,
                              L=self.L, llr_max=self.llr_max,
                              harmonize=self.harmonize)

    def total_iterations(self):
        base = self.rhs.L if self.kind == "rhs" else self.L
        extra = self.harmonize.phase2_iterations if self.harmonize else 0
        return base + extra

    def label(self):
        if self.kind == "rhs":
            c = self.rhs
            return "rhs k=%d %s beta=%s" % (c.k, c.tracker_mode,
                                            c.beta_schedule.describe())
        if self.kind == "nms":
            return "nms alpha=%g" % self.alpha
        return self.kind


@dataclass
class StoppingRule:
    min_frame_errors: int = 100
    max_frames: int = None
    max_wall_time: float = None

    def __post_init__(self):
        if self.max_frames is None and self.max_wall_time is None:
            raise ValueError("need max_frames or max_wall_time; "
                             "an error target alone may never stop")

    def done(self, frame_errors, frames, elapsed):
        if self.max_frames is not None and frames >= self.max_frames:
            return True
        if self.max_wall_time is not None and elapsed >= self.max_wall_time:
            return True
        return frame_errors >= self.min_frame_errors

    def frame_cap(self):
        return self.max_frames if self.max_frames is not None else None


@dataclass
class PointResult:
    ebn0_db: float
    sigma2: float
    frames: int
    bit_errors: int
    frame_errors: int
    channel_errors: float
    converged_frames: int
    phase2_converged_frames: int
    n_unpunctured: int
    iteration_histogram: np.ndarray  # index = iterations used (0 unused)
    settle_cum: np.ndarray           # cumulative bit errors had L been t

    @property
    def ber(self):
        return self.bit_errors / (self.frames * self.n_unpunctured)

    @property
    def fer(self):
        return self.frame_errors / self.frames

    @property
    def channel_ber(self):
        return self.channel_errors / (self.frames * self.n_unpunctured)

    @property
    def ber_ci(self):
        return proportion_ci(self.bit_errors, self.frames * self.n_unpunctured,
                             wilson=self.frame_errors < 30)

    @property
    def fer_ci(self):
        return proportion_ci(self.frame_errors, self.frames,
                             wilson=self.frame_errors < 30)

    @property
    def mean_iterations(self):
        t = np.arange(self.iteration_histogram.size)
        return float((self.iteration_histogram * t).sum() / self.frames)

    @property
    def max_iterations(self):
        nz = np.nonzero(self.iteration_histogram)[0]
        return int(nz[-1]) if nz.size else 0


@dataclass
class SimResult:
    points: list
    master_seed: int
    spec_label: str
    workers: int
    batch_frames: int
    wall_time_s: float
    config_echo: dict = field(default_factory=dict)
    version: str = __version__


def proportion_ci(errors, trials, z=1.96, wilson=False):
    """95% interval for an error proportion; Wilson form for sparse counts."""
    if trials <= 0:
        return (0.0, 0.0)
    p = errors / trials
    if not wilson:
        h = z * math.sqrt(max(p * (1.0 - p), 0.0) / trials)
        return (max(0.0, p - h), min(1.0, p + h))
    z2 = z * z
    den = 1.0 + z2 / trials
    mid = (p + z2 / (2.0 * trials)) / den
    h = z * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / den
    return (max(0.0, mid - h), min(1.0, mid + h))


# ---------------------------------------------------------------------------
# frame execution

def _frame_rngs(master_seed, point_idx, frame_idx):
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(point_idx, frame_idx))
    noise_ss, dec_ss = ss.spawn(2)
    return np.random.default_rng(noise_ss), np.random.default_rng(dec_ss)


def _decode_frames(graph, decoder, channel, params, master_seed, point_idx,
                   start, count, total_iters):
    unp = ~graph.punctured
    n_unp = int(unp.sum())
    acc = {
        "frames": count,
        "bit_errors": 0,
        "frame_errors": 0,
        "channel_errors": 0.0,
        "converged": 0,
        "phase2_converged": 0,
        "hist": np.zeros(total_iters + 1, dtype=np.int64),
        "settle": np.zeros(total_iters, dtype=np.int64),
        "n_unpunctured": n_unp,
    }
    for f in range(start, start + count):
        noise_rng, dec_rng = _frame_rngs(master_seed, point_idx, f)
        y = transmit_all_zero(graph, params, noise_rng)
        word = llr_init(y, params)
        if channel.quantize_bits is not None:
            word = quantize_llr(word, channel.quantize_bits,
                                channel.quantize_step)
        vals = word.values
        acc["channel_errors"] += float((vals[unp] < 0).sum()) \
            + 0.5 * float((vals[unp] == 0).sum())
        out = decoder.decode(word, rng=dec_rng)
        errs = int((out.decision[unp] != 0).sum())
        acc["bit_errors"] += errs
        if errs:
            acc["frame_errors"] += 1
        if out.converged:
            acc["converged"] += 1
            if out.phase == 2:
                acc["phase2_converged"] += 1
        acc["hist"][out.iterations_used] += 1
        s = out.per_iteration_bit_errors
        acc["settle"][:s.size] += s
        if s.size < total_iters:
            acc["settle"][s.size:] += s[-1]
    return acc


def _merge(total, part):
    if total is None:
        return part
    for k, v in part.items():
        if k == "n_unpunctured":
            continue
        total[k] = total[k] + v
    return total


_WCTX = {}


def _init_worker(graph, spec, channel, master_seed):
    _WCTX["graph"] = graph
    _WCTX["decoder"] = spec.build(graph)
    _WCTX["channel"] = channel
    _WCTX["seed"] = master_seed
    _WCTX["total_iters"] = spec.total_iterations()


def _batch_worker(args):
    point_idx, ebn0, start, count = args
    params = _WCTX["channel"].params(ebn0)
    return _decode_frames(_WCTX["graph"], _WCTX["decoder"], _WCTX["channel"],
                          params, _WCTX["seed"], point_idx, start, count,
                          _WCTX["total_iters"])


def run_ber(graph, spec, ebn0_list, stopping, channel, workers=1, seed=0,
            batch_frames=256, config_echo=None, progress=None):
    """Monte-Carlo sweep over SNR points.

    Results are identical for any `workers` given the same seed: frame i of
    point p always sees the same randomness, and the stopping rule is applied
    to fixed-size batches in index order.
    """
    t0 = time.monotonic()
    points = []
    pool = None
    try:
        if workers > 1:
            pool = ProcessPoolExecutor(
                max_workers=workers, initializer=_init_worker,
                initargs=(graph, spec, channel, seed))
        decoder = None if pool else spec.build(graph)
        total_iters = spec.total_iterations()
        for pi, ebn0 in enumerate(ebn0_list):
            params = channel.params(ebn0)
            cap = stopping.frame_cap()
            acc = None

            def batch_bounds(b):
                start = b * batch_frames
                count = batch_frames
                if cap is not None:
                    count = min(count, cap - start)
                return start, count

            if pool is None:
                b = 0
                while True:
                    start, count = batch_bounds(b)
                    if count <= 0:
                        break
                    part = _decode_frames(graph, decoder, channel, params,
                                          seed, pi, start, count, total_iters)
                    acc = _merge(acc, part)
                    b += 1
                    if progress:
                        progress(ebn0, acc)
                    if stopping.done(acc["frame_errors"], acc["frames"],
                                     time.monotonic() - t0):
                        break
            else:
                pending = {}
                next_submit = 0
                next_process = 0
                stopped = False
                while not stopped:
                    while len(pending) < 2 * workers:
                        start, count = batch_bounds(next_submit)
                        if count <= 0:
                            break
                        pending[next_submit] = pool.submit(
                            _batch_worker, (pi, ebn0, start, count))
                        next_submit += 1
                    if next_process not in pending:
                        break
                    part = pending.pop(next_process).result()
                    next_process += 1
                    acc = _merge(acc, part)
                    if progress:
                        progress(ebn0, acc)
                    if stopping.done(acc["frame_errors"], acc["frames"],
                                     time.monotonic() - t0):
                        stopped = True
                for fut in pending.values():
                    fut.cancel()
            if acc is None:
                raise ValueError("stopping rule allowed zero frames")
            points.append(PointResult(
                ebn0_db=ebn0, sigma2=params.sigma2,
                frames=int(acc["frames"]),
                bit_errors=int(acc["bit_errors"]),
                frame_errors=int(acc["frame_errors"]),
                channel_errors=float(acc["channel_errors"]),
                converged_frames=int(acc["converged"]),
                phase2_converged_frames=int(acc["phase2_converged"]),
                n_unpunctured=int(acc["n_unpunctured"]),
                iteration_histogram=acc["hist"],
                settle_cum=acc["settle"]))
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)
    return SimResult(points=points, master_seed=seed, spec_label=spec.label(),
                     workers=workers, batch_frames=batch_frames,
                     wall_time_s=time.monotonic() - t0,
                     config_echo=config_echo or {})


# ---------------------------------------------------------------------------
# derived series

def settling_curve(point):
    """[(t, BER had the iteration budget been t)] for t = 1..T."""
    denom = point.frames * point.n_unpunctured
    return [(t + 1, c / denom) for t, c in enumerate(point.settle_cum)]


def ber_transfer(point):
    """[(BER at t-1, BER at t)]; the first input is the channel's own BER."""
    curve = settling_curve(point)
    prev = point.channel_ber
    out = []
    for _t, ber in curve:
        out.append((prev, ber))
        prev = ber
    return out


def iteration_stats(point):
    return point.mean_iterations, point.max_iterations, point.iteration_histogram


def _interp_out(curve, ber_in):
    """Log-log interpolate a transfer curve at a BER-in value."""
    pts = sorted((bi, bo) for bi, bo in curve if bi > 0 and bo > 0)
    if not pts:
        return math.nan
    xs = np.log([p[0] for p in pts])
    ys = np.log([p[1] for p in pts])
    x = math.log(ber_in)
    return float(math.e ** np.interp(x, xs, ys))


def beta_sequence_search(transfer_by_beta, L):
    """Two-segment schedule from per-beta transfer curves at one SNR.

    Picks the beta that wins (lowest BER-out) at high BER-in and the winner
    at low BER-in; the switch iteration is where the first beta's own
    settling trajectory crosses the BER-in level at which the winner changes.
    Returns (BetaSchedule, report dict).
    """
    from .rhs import BetaSchedule
    betas = list(transfer_by_beta)
    if len(betas) < 2:
        raise ValueError("need at least two beta candidates")
    ins = [bi for c in transfer_by_beta.values() for bi, _ in c if bi > 0]
    lo, hi = min(ins), max(ins)
    grid = np.exp(np.linspace(math.log(hi), math.log(lo), 200))
    winners = []
    for g in grid:
        outs = {b: _interp_out(c, g) for b, c in transfer_by_beta.items()}
        winners.append(min(outs, key=lambda b: outs[b]))
    first = winners[0]
    switch_level = None
    second = None
    for g, w in zip(grid, winners):
        if w != first:
            switch_level = g
            second = w
            break
    report = {"winner_high": first, "winner_low": winners[-1],
              "switch_ber_in": switch_level}
    if switch_level is None:
        return BetaSchedule.constant(first), report
    # iteration at which the first beta's run has passed the switch level
    l = None
    for t, (_bi, bo) in enumerate(transfer_by_beta[first], start=1):
        if bo <= switch_level:
            l = t
            break
    if l is None or l >= L:
        return BetaSchedule.constant(first), report
    report["switch_iteration"] = l
    return BetaSchedule([(first, l), (second, None)]), report


# ---------------------------------------------------------------------------
# persistence

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


POINT_COLUMNS = ["ebn0_db", "sigma2", "frames", "bit_errors", "frame_errors",
                 "ber", "fer", "ber_ci_lo", "ber_ci_hi", "fer_ci_lo",
                 "fer_ci_hi", "channel_ber", "mean_iterations",
                 "max_iterations", "converged_frames",
                 "phase2_converged_frames"]


def write_point_csv(result, path):
    with open(path, "w") as f:
        f.write(",".join(POINT_COLUMNS) + "\n")
        for p in result.points:
            blo, bhi = p.ber_ci
            flo, fhi = p.fer_ci
            row = [p.ebn0_db, p.sigma2, p.frames, p.bit_errors,
                   p.frame_errors, p.ber, p.fer, blo, bhi, flo, fhi,
                   p.channel_ber, p.mean_iterations, p.max_iterations,
                   p.converged_frames, p.phase2_converged_frames]
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_settling_csv(result, path):
    with open(path, "w") as f:
        f.write("ebn0_db,t,cum_bit_errors,frames,ber_t\n")
        for p in result.points:
            for t, ber in settling_curve(p):
                f.write(",".join(_fmt(v) for v in
                                 [p.ebn0_db, t,
                                  int(p.settle_cum[t - 1]), p.frames, ber])
                        + "\n")


def write_transfer_csv(result, path):
    with open(path, "w") as f:
        f.write("ebn0_db,t,ber_in,ber_out\n")
        for p in result.points:
            for t, (bi, bo) in enumerate(ber_transfer(p), start=1):
                f.write(",".join(_fmt(v) for v in [p.ebn0_db, t, bi, bo])
                        + "\n")


def write_manifest(result, path, extra=None):
    doc = {
        "version": result.version,
        "master_seed": result.master_seed,
        "decoder": result.spec_label,
        "workers": result.workers,
        "batch_frames": result.batch_frames,
        "wall_time_s": result.wall_time_s,
        "config": result.config_echo,
        "points": [{
            "ebn0_db": p.ebn0_db,
            "frames": p.frames,
            "iteration_histogram": p.iteration_histogram.tolist(),
        } for p in result.points],
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# linearizer probe

def tracker_probe_scorer(graph, base_config, ebn0, channel, frames=2000,
                         seed=20260101, tracker_mode="linear-llr"):
    """Fixed-seed BER probe for rounding searches: same frames, same noise,
    only the tracker parameters change between calls."""

    def score(params):
        cfg = dataclasses.replace(base_config, tracker_mode=tracker_mode,
                                  linear_params=params)
        dec = RhsDecoder(graph, cfg)
        params_ch = channel.params(ebn0)
        acc = _decode_frames(graph, dec, channel, params_ch, seed, 0, 0,
                             frames, cfg.L)
        return acc["bit_errors"] / (frames * acc["n_unpunctured"])

    return score
