"""Command-line front end.

Sub-commands: ber, settle, transfer, linearize, beta-opt, decode-one.
Configuration comes from a TOML file; --seed, --workers and --out are given
on the command line. Exit codes: 0 success, 1 campaign stopped on a frame or
time budget before reaching its error target, 2 configuration error.
"""

import argparse
import dataclasses
import json
import os
import sys
from fractions import Fraction

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from .channel import llr_init, quantize_llr, transmit_all_zero
from .graph import TannerGraph, generate_regular_code, load_alist, read_puncture_mask
from .harmonize import HarmonizeConfig
from .linearize import design_tracker_params, k2_rs_rounded, k4_ar4ja_rounded, round_params
from .rhs import BetaSchedule, RhsConfig
from .sim import (ChannelSpec, DecoderSpec, StoppingRule, _frame_rngs,
                  ber_transfer, beta_sequence_search, run_ber, settling_curve,
                  tracker_probe_scorer, write_manifest, write_point_csv,
                  write_settling_csv, write_transfer_csv)
from .stochastic import SaturationModel, read_tracker_params, write_tracker_params

EXIT_OK = 0
EXIT_INCOMPLETE = 1
EXIT_CONFIG = 2

_MISSING = object()


class ConfigError(Exception):
    pass


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except OSError as e:
        raise ConfigError("cannot read %s: %s" % (path, e))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("%s: %s" % (path, e))


def _section(cfg, name):
    s = cfg.get(name, {})
    if not isinstance(s, dict):
        raise ConfigError("[%s] must be a table" % name)
    return s


def _get(sect, section, key, kind, default=_MISSING):
    if key not in sect:
        if default is _MISSING:
            raise ConfigError("[%s] is missing required key '%s'"
                              % (section, key))
        return default
    v = sect[key]
    ok = {
        "int": lambda x: isinstance(x, int) and not isinstance(x, bool),
        "float": lambda x: isinstance(x, (int, float)) and not isinstance(x, bool),
        "str": lambda x: isinstance(x, str),
        "bool": lambda x: isinstance(x, bool),
        "list": lambda x: isinstance(x, list),
    }[kind]
    if not ok(v):
        raise ConfigError("[%s] key '%s' must be a %s, got %r"
                          % (section, key, kind, v))
    return float(v) if kind == "float" else v


# ---------------------------------------------------------------------------
# config -> objects

def build_graph(cfg):
    code = _section(cfg, "code")
    if not code:
        raise ConfigError("missing [code] section")
    alist = _get(code, "code", "alist", "str", None)
    try:
        if alist:
            g = load_alist(alist)
        else:
            n = _get(code, "code", "n", "int")
            dv = _get(code, "code", "dv", "int")
            dc = _get(code, "code", "dc", "int")
            seed = _get(code, "code", "seed", "int", 1)
            g = generate_regular_code(n, dv, dc, seed=seed)
    except OSError as e:
        raise ConfigError("[code] alist: %s" % e)
    except ValueError as e:
        raise ConfigError("[code]: %s" % e)
    punc = _get(code, "code", "puncture", "str", None)
    if punc:
        try:
            with open(punc) as f:
                mask = read_puncture_mask(f.read(), g.n)
        except OSError as e:
            raise ConfigError("[code] puncture: %s" % e)
        except ValueError as e:
            raise ConfigError("[code] puncture: %s" % e)
        g = TannerGraph(g.vn_adj, g.cn_adj, punctured=mask)
    return g


def build_channel(cfg, graph):
    ch = _section(cfg, "channel")
    rate = _get(ch, "channel", "rate", "float", None)
    if rate is None:
        rate = (graph.n - graph.m) / graph.n
    if not 0.0 < rate <= 1.0:
        raise ConfigError("[channel] rate must be in (0, 1], got %r" % rate)
    qb = _get(ch, "channel", "quantize_bits", "int", None)
    qs = _get(ch, "channel", "quantize_step", "float", 1.0)
    return ChannelSpec(rate=rate, quantize_bits=qb, quantize_step=qs)


def _load_tracker_params(name):
    presets = {"k2-rs": k2_rs_rounded, "k4-ar4ja": k4_ar4ja_rounded}
    if name in presets:
        return presets[name]()
    try:
        return read_tracker_params(name)
    except OSError as e:
        raise ConfigError("[rhs] params: %s" % e)
    except ValueError as e:
        raise ConfigError("[rhs] params %s: %s" % (name, e))


def build_rhs_config(cfg, L):
    r = _section(cfg, "rhs")
    if not r:
        raise ConfigError("decoder kind 'rhs' needs an [rhs] section")
    k = _get(r, "rhs", "k", "int")
    beta = r.get("beta", 0.25)
    if isinstance(beta, str):
        schedule = beta  # RhsConfig parses schedule strings
    elif isinstance(beta, (int, float)) and not isinstance(beta, bool):
        schedule = BetaSchedule.constant(float(beta))
    else:
        raise ConfigError("[rhs] beta must be a number or schedule string")
    params_key = r.get("params")
    linear_params = None
    if params_key is not None:
        if isinstance(params_key, str):
            params_key = [params_key]
        if not isinstance(params_key, list):
            raise ConfigError("[rhs] params must be a string or list")
        linear_params = [_load_tracker_params(p) for p in params_key]
    psi = _get(r, "rhs", "psi", "list", None)
    try:
        return RhsConfig(
            k=k,
            beta_schedule=schedule,
            lambda_cap=_get(r, "rhs", "lambda_cap", "float", 8.0),
            s_mode=_get(r, "rhs", "s_mode", "str", "zero"),
            tracker_mode=_get(r, "rhs", "tracker", "str", "fp-probability"),
            threshold_mode=_get(r, "rhs", "threshold", "str", "exact"),
            rng_sharing=_get(r, "rhs", "rng_sharing", "int", 64),
            L=L,
            linear_params=linear_params,
            q=_get(r, "rhs", "q", "int", None),
            psi=psi,
            special_value=_get(r, "rhs", "special_value", "float", 2.0),
            tracker_bits=_get(r, "rhs", "tracker_bits", "int", None),
        )
    except ValueError as e:
        raise ConfigError("[rhs]: %s" % e)


def build_harmonize(cfg):
    p2 = _section(cfg, "phase2")
    if not p2 or not _get(p2, "phase2", "enable", "bool", False):
        return None
    try:
        return HarmonizeConfig(
            d=_get(p2, "phase2", "d", "float", 0.3),
            interpretation=_get(p2, "phase2", "interpretation", "str",
                                "lone-dissenter"),
            phase2_iterations=_get(p2, "phase2", "iterations", "int", 50),
            reset_state=_get(p2, "phase2", "reset_state", "bool", False),
        )
    except ValueError as e:
        raise ConfigError("[phase2]: %s" % e)


def build_decoder_spec(cfg):
    d = _section(cfg, "decoder")
    kind = _get(d, "decoder", "kind", "str", "spa")
    L = _get(d, "decoder", "L", "int", 50)
    harm = build_harmonize(cfg)
    try:
        if kind == "rhs":
            return DecoderSpec(kind="rhs", rhs=build_rhs_config(cfg, L),
                               harmonize=harm)
        return DecoderSpec(kind=kind, L=L,
                           alpha=_get(d, "decoder", "alpha", "float", 1.0),
                           llr_max=_get(d, "decoder", "llr_max", "float", 1e3),
                           harmonize=harm)
    except ValueError as e:
        raise ConfigError("[decoder]: %s" % e)


def build_stopping(cfg):
    run = _section(cfg, "run")
    try:
        return StoppingRule(
            min_frame_errors=_get(run, "run", "min_frame_errors", "int", 100),
            max_frames=_get(run, "run", "max_frames", "int", None),
            max_wall_time=_get(run, "run", "max_wall_time", "float", None),
        )
    except ValueError as e:
        raise ConfigError("[run]: %s" % e)


def _ebn0_list(cfg, override=None):
    if override is not None:
        return [override]
    run = _section(cfg, "run")
    v = run.get("ebn0_db")
    if v is None:
        raise ConfigError("[run] is missing 'ebn0_db'")
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [float(v)]
    if isinstance(v, list) and v and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return [float(x) for x in v]
    raise ConfigError("[run] ebn0_db must be a number or list of numbers")


def _batch_frames(cfg):
    run = _section(cfg, "run")
    b = _get(run, "run", "batch_frames", "int", 256)
    if b < 1:
        raise ConfigError("[run] batch_frames must be >= 1")
    return b


# ---------------------------------------------------------------------------
# output helpers

def _outpath(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _gp_ber(result):
    return """set datafile separator ","
set xlabel "Eb/N0 (dB)"
set ylabel "error rate"
set logscale y
set format y "1e%T"
set grid
set key left bottom
plot "points.csv" skip 1 using 1:6 with linespoints title "BER", \\
     "points.csv" skip 1 using 1:7 with linespoints title "FER", \\
     "points.csv" skip 1 using 1:8:9 with yerrorbars notitle, \\
     "points.csv" skip 1 using 1:12 with lines dashtype 2 title "channel BER"
"""


def _gp_settling(result):
    snrs = " ".join("%g" % p.ebn0_db for p in result.points)
    return ("""set datafile separator ","
set xlabel "iteration limit"
set ylabel "BER"
set logscale y
set format y "1e%T"
set grid
""" + 'snrs = "' + snrs + '"\n'
            + 'plot for [s in snrs] "settling.csv" skip 1 '
              'using (column(1) == real(s) ? column(2) : 1/0):5 '
              'with linespoints title "Eb/N0 = ".s." dB"\n')


def _gp_transfer(result):
    snrs = " ".join("%g" % p.ebn0_db for p in result.points)
    return ("""set datafile separator ","
set xlabel "BER in"
set ylabel "BER out"
set logscale xy
set format xy "1e%T"
set grid
""" + 'snrs = "' + snrs + '"\n'
            + 'plot for [s in snrs] "transfer.csv" skip 1 '
              'using (column(1) == real(s) ? column(3) : 1/0):4 '
              'with linespoints title "Eb/N0 = ".s." dB", x dashtype 2 notitle\n')


def _campaign(args, cfg):
    graph = build_graph(cfg)
    channel = build_channel(cfg, graph)
    spec = build_decoder_spec(cfg)
    stopping = build_stopping(cfg)
    result = run_ber(graph, spec, _ebn0_list(cfg), stopping, channel,
                     workers=args.workers, seed=args.seed,
                     batch_frames=_batch_frames(cfg), config_echo=cfg)
    return result, stopping


def _finish_campaign(args, result, stopping, command, plots):
    write_point_csv(result, _outpath(args, "points.csv"))
    write_settling_csv(result, _outpath(args, "settling.csv"))
    write_transfer_csv(result, _outpath(args, "transfer.csv"))
    write_manifest(result, _outpath(args, "manifest.json"),
                   extra={"command": command})
    for name, text in plots.items():
        _write(_outpath(args, name), text)
    incomplete = False
    for p in result.points:
        line = ("Eb/N0 %5.2f dB  frames %-7d BER %.3e  FER %.3e  "
                "mean iters %.2f" % (p.ebn0_db, p.frames, p.ber, p.fer,
                                     p.mean_iterations))
        if p.frame_errors < stopping.min_frame_errors:
            line += "  (budget reached at %d frame errors)" % p.frame_errors
            incomplete = True
        print(line)
    print("wrote %s" % os.path.abspath(args.out))
    return EXIT_INCOMPLETE if incomplete else EXIT_OK


def cmd_ber(args, cfg):
    result, stopping = _campaign(args, cfg)
    return _finish_campaign(args, result, stopping, "ber",
                            {"plot_ber.gp": _gp_ber(result)})


def cmd_settle(args, cfg):
    result, stopping = _campaign(args, cfg)
    return _finish_campaign(args, result, stopping, "settle",
                            {"plot_settling.gp": _gp_settling(result)})


def cmd_transfer(args, cfg):
    result, stopping = _campaign(args, cfg)
    return _finish_campaign(args, result, stopping, "transfer",
                            {"plot_transfer.gp": _gp_transfer(result)})


def cmd_beta_opt(args, cfg):
    bo = _section(cfg, "beta_opt")
    if not bo:
        raise ConfigError("beta-opt needs a [beta_opt] section")
    cand = _get(bo, "beta_opt", "candidates", "list")
    betas = []
    for c in cand:
        if isinstance(c, (int, float)) and not isinstance(c, bool):
            betas.append(float(c))
        else:
            raise ConfigError("[beta_opt] candidates must be numbers")
    if len(betas) < 2:
        raise ConfigError("[beta_opt] needs at least two candidates")
    ebn0 = _get(bo, "beta_opt", "ebn0_db", "float")

    graph = build_graph(cfg)
    channel = build_channel(cfg, graph)
    spec = build_decoder_spec(cfg)
    if spec.kind != "rhs":
        raise ConfigError("beta-opt requires decoder kind 'rhs'")
    stopping = build_stopping(cfg)
    batch = _batch_frames(cfg)

    transfer_by_beta = {}
    results = {}
    incomplete = False
    for b in betas:
        rhs_cfg = dataclasses.replace(spec.rhs,
                                      beta_schedule=BetaSchedule.constant(b))
        cspec = dataclasses.replace(spec, rhs=rhs_cfg)
        res = run_ber(graph, cspec, [ebn0], stopping, channel,
                      workers=args.workers, seed=args.seed,
                      batch_frames=batch, config_echo=cfg)
        p = res.points[0]
        transfer_by_beta[b] = ber_transfer(p)
        results[b] = res
        if p.frame_errors < stopping.min_frame_errors:
            incomplete = True
        with open(_outpath(args, "transfer_beta_%g.csv" % b), "w") as f:
            f.write("t,ber_in,ber_out\n")
            for t, (bi, bo_) in enumerate(transfer_by_beta[b], start=1):
                f.write("%d,%r,%r\n" % (t, bi, bo_))

    L = spec.rhs.L
    schedule, report = beta_sequence_search(transfer_by_beta, L)
    doc = {
        "ebn0_db": ebn0,
        "candidates": betas,
        "schedule": schedule.describe(),
        "envelope": report,
        "mean_iterations": {("%g" % b): results[b].points[0].mean_iterations
                            for b in betas},
    }
    with open(_outpath(args, "beta_opt.json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    for b in betas:
        write_manifest(results[b],
                       _outpath(args, "manifest_beta_%g.json" % b),
                       extra={"command": "beta-opt"})
    print("schedule: %s" % schedule.describe())
    if report.get("switch_ber_in"):
        print("envelope switch at BER-in %.3e (iteration %s)"
              % (report["switch_ber_in"], report.get("switch_iteration")))
    print("wrote %s" % os.path.abspath(args.out))
    return EXIT_INCOMPLETE if incomplete else EXIT_OK


def _parse_beta(v):
    if isinstance(v, str):
        try:
            return float(Fraction(v))
        except (ValueError, ZeroDivisionError):
            raise ConfigError("[linearize] beta %r is not a number" % v)
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    raise ConfigError("[linearize] beta must be a number")


def cmd_linearize(args, cfg):
    lz = _section(cfg, "linearize")
    if not lz:
        raise ConfigError("linearize needs a [linearize] section")
    if "beta" not in lz:
        raise ConfigError("[linearize] is missing required key 'beta'")
    beta = _parse_beta(lz["beta"])
    k = _get(lz, "linearize", "k", "int")
    lambda_cap = _get(lz, "linearize", "lambda_cap", "float", 8.0)
    s = _get(lz, "linearize", "s", "int", 0)
    lambda_l = _get(lz, "linearize", "lambda_l", "float", None)
    grid = _get(lz, "linearize", "grid", "int", 10000)
    slope_one = _get(lz, "linearize", "slope_one_ends", "bool", True)
    do_round = _get(lz, "linearize", "round", "bool", False)

    sat = SaturationModel(lambda_cap=lambda_cap, s=s)
    try:
        fitted, fits = design_tracker_params(beta, k, sat, lambda_l=lambda_l,
                                             slope_one_ends=slope_one,
                                             grid=grid)
    except ValueError as e:
        raise ConfigError("[linearize]: %s" % e)

    report = {"beta": beta, "k": k, "lambda_l": str(fitted.lambda_l),
              "fits": fits}
    params = fitted
    if do_round:
        graph = build_graph(cfg)
        channel = build_channel(cfg, graph)
        probe_ebn0 = _get(lz, "linearize", "probe_ebn0", "float")
        probe_frames = _get(lz, "linearize", "probe_frames", "int", 2000)
        probe_L = _get(lz, "linearize", "probe_L", "int", 10)
        max_frac_bits = _get(lz, "linearize", "max_frac_bits", "int", 6)
        base_cfg = RhsConfig(k=k, beta_schedule=BetaSchedule.constant(beta),
                             lambda_cap=lambda_cap, L=probe_L,
                             tracker_mode="linear-llr", linear_params=fitted)
        score = tracker_probe_scorer(graph, base_cfg, probe_ebn0, channel,
                                     frames=probe_frames, seed=args.seed)
        params, round_report = round_params(fitted, score,
                                            max_frac_bits=max_frac_bits)
        report["rounding"] = round_report

    out_params = _outpath(args, "tracker.params")
    write_tracker_params(params, out_params)
    with open(_outpath(args, "linearize_report.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    for n, row in enumerate(params.rows):
        print("mu_%d: a=%s b=%s domain=[%s, %s]"
              % (n, row.a, row.b, row.lo, row.hi))
    print("lambda_l = %s" % params.lambda_l)
    print("wrote %s" % out_params)
    return EXIT_OK


def cmd_decode_one(args, cfg):
    graph = build_graph(cfg)
    channel = build_channel(cfg, graph)
    spec = build_decoder_spec(cfg)
    ebn0 = args.ebn0
    if ebn0 is None:
        ebn0 = _ebn0_list(cfg)[0]
    params = channel.params(ebn0)
    noise_rng, dec_rng = _frame_rngs(args.seed, 0, args.frame)
    y = transmit_all_zero(graph, params, noise_rng)
    word = llr_init(y, params)
    if channel.quantize_bits is not None:
        word = quantize_llr(word, channel.quantize_bits, channel.quantize_step)
    decoder = spec.build(graph)
    out = decoder.decode(word, rng=dec_rng)
    unp = ~graph.punctured
    errs = int((out.decision[unp] != 0).sum())
    print("Eb/N0 %.2f dB, frame %d: %s after %d iterations (phase %d), "
          "%d bit errors"
          % (ebn0, args.frame,
             "converged" if out.converged else "not converged",
             out.iterations_used, out.phase, errs))
    if args.out != ".":
        doc = {"ebn0_db": ebn0, "frame": args.frame,
               "converged": bool(out.converged),
               "iterations": int(out.iterations_used),
               "phase": int(out.phase), "bit_errors": errs,
               "settling": out.per_iteration_bit_errors.tolist()}
        with open(_outpath(args, "decode.json"), "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
    return EXIT_OK


_COMMANDS = {
    "ber": cmd_ber,
    "settle": cmd_settle,
    "transfer": cmd_transfer,
    "beta-opt": cmd_beta_opt,
    "linearize": cmd_linearize,
    "decode-one": cmd_decode_one,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="TOML configuration file")
    common.add_argument("--seed", type=int, default=0,
                        help="master seed (default 0)")
    common.add_argument("--workers", type=int, default=1,
                        help="worker processes (default 1)")
    common.add_argument("--out", metavar="DIR", default=".",
                        help="output directory (default .)")
    p = argparse.ArgumentParser(
        prog="rhslab",
        description="LDPC decoding experiments: belief-propagation references "
                    "and relaxed half-stochastic decoders")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ber", parents=[common],
                   help="BER/FER sweep over Eb/N0 points")
    sub.add_parser("settle", parents=[common],
                   help="BER as a function of the iteration limit")
    sub.add_parser("transfer", parents=[common],
                   help="per-iteration BER-in/BER-out transfer curves")
    sub.add_parser("beta-opt", parents=[common],
                   help="two-segment relaxation schedule from transfer curves")
    sub.add_parser("linearize", parents=[common],
                   help="fit and round piecewise-linear tracker parameters")
    d1 = sub.add_parser("decode-one", parents=[common],
                        help="decode a single frame and report the outcome")
    d1.add_argument("--ebn0", type=float, help="Eb/N0 in dB")
    d1.add_argument("--frame", type=int, default=0,
                    help="frame index within the seed stream")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print("config error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
