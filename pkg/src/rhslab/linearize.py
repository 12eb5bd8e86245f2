"""Offline design of piecewise-linear tracker transfer functions.

Three steps: (1) find the image of the exact tracker transfer f(L; mu) over
the representable input range, truncating open ends at +-lambda_L; (2)
least-squares fit a*L + b on that interval (slope fixed to 1 for the
endpoint messages when the adder-only constraint is requested); (3) replace
the fitted constants by compact dyadic rationals, accepting the cheapest
candidates whose simulated BER stays within a configured factor of the
fitted-parameter BER.

The result is a LinearTrackerParams record ready for the linear-llr and
rounded-integer decoder modes.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .bp import llr_to_prob, prob_to_llr
from .stochastic import (LinearTrackerParams, MessageSet, TransferRow,
                         float_to_fraction, track_llr_exact)


def transfer_image(beta, mu, sat, lambda_l=None):
    """Image [lo, hi] of the exact tracker transfer over its input range.

    The input ranges over [-lambda_L, lambda_L] when the saturation model is
    active (s > 0), otherwise over all reals. Ends that escape
    [-lambda_l, lambda_l] are truncated to it.
    """
    if lambda_l is None:
        lambda_l = sat.lambda_l(beta)
    if sat.s > 0:
        p_min = sat.p_lo(beta)
        p_max = sat.p_hi(beta)
    else:
        p_min, p_max = 0.0, 1.0
    out_hi_p = (1.0 - beta) * p_min + beta * mu   # smallest p -> largest LLR
    out_lo_p = (1.0 - beta) * p_max + beta * mu
    hi = float(prob_to_llr(max(out_hi_p, 0.0))) if out_hi_p > 0 else math.inf
    lo = float(prob_to_llr(min(out_lo_p, 1.0))) if out_lo_p < 1 else -math.inf
    return max(lo, -lambda_l), min(hi, lambda_l)


def fit_linear(beta, mu, domain, constraint="free", grid=10000):
    """Least-squares line through the exact transfer sampled on `domain`.

    constraint "slope-one" fixes a = 1 and fits only the intercept.
    Returns (a, b, mse).
    """
    lo, hi = domain
    if not lo < hi:
        raise ValueError("empty fit domain [%r, %r]" % (lo, hi))
    x = np.linspace(lo, hi, grid)
    y = track_llr_exact(x, mu, beta, math.inf)
    if constraint == "slope-one":
        a = 1.0
        b = float(np.mean(y - x))
    elif constraint == "free":
        a, b = np.polyfit(x, y, 1)
        a, b = float(a), float(b)
    else:
        raise ValueError("constraint must be 'free' or 'slope-one'")
    mse = float(np.mean((y - (a * x + b)) ** 2))
    return a, b, mse


def design_tracker_params(beta, k, sat, lambda_l=None, slope_one_ends=True,
                          grid=10000, margin=0.1):
    """Steps 1-2 for every message index up to k//2: fitted params.

    With the saturation model active, the mu_0 fit domain is trimmed by
    `margin` (fraction of its width) next to the singular upper end.
    """
    if lambda_l is None:
        lambda_l = sat.lambda_l(beta)
    if not math.isfinite(lambda_l):
        raise ValueError("need a finite lambda_l (given or from the "
                         "saturation model)")
    mus = MessageSet.make(k, sat.phi).values
    rows = []
    fits = []
    for n in range(k // 2 + 1):
        lo, hi = transfer_image(beta, float(mus[n]), sat, lambda_l)
        if sat.s > 0 and n == 0:
            hi = hi - margin * (hi - lo)
        constraint = "slope-one" if (slope_one_ends and n == 0) else "free"
        a, b, mse = fit_linear(beta, float(mus[n]), (lo, hi),
                               constraint=constraint, grid=grid)
        rows.append(TransferRow(float_to_fraction(a), float_to_fraction(b),
                                float_to_fraction(lo), float_to_fraction(hi)))
        fits.append({"n": n, "a": a, "b": b, "mse": mse,
                     "domain": (lo, hi), "constraint": constraint})
    params = LinearTrackerParams(
        k=k, beta=float_to_fraction(beta), rows=rows,
        lambda_l=float_to_fraction(lambda_l), provenance="fitted")
    return params, fits


def dyadic_candidates(value, max_frac_bits):
    """Roundings of `value` at 0..max_frac_bits fractional bits, deduplicated,
    cheapest (fewest bits) first."""
    out = []
    for fb in range(max_frac_bits + 1):
        c = Fraction(round(value * (1 << fb)), 1 << fb)
        if c not in out:
            out.append(c)
    return out


def _with_row(params, n, **repl):
    rows = list(params.rows)
    r = rows[n]
    rows[n] = TransferRow(repl.get("a", r.a), repl.get("b", r.b),
                          repl.get("lo", r.lo), repl.get("hi", r.hi))
    return LinearTrackerParams(k=params.k, beta=params.beta, rows=rows,
                               lambda_l=params.lambda_l,
                               lambda_l_by_dc=dict(params.lambda_l_by_dc),
                               provenance=params.provenance)


def round_params(fitted, score, max_frac_bits=6, accept_factor=1.1):
    """Step 3: dyadic rounding with a simulation scorer.

    Each slope/intercept is replaced, one at a time, by its cheapest dyadic
    rounding whose probe BER stays within accept_factor of the fitted-params
    probe BER; slopes of slope-one rows (a exactly 1) are left alone. Domain
    ends and lambda_L are then snapped to the grid spanned by the accepted
    coefficients. Returns (rounded_params, report).
    """
    base = score(fitted)
    budget_ok = True
    current = fitted
    report = {"base_ber": base, "choices": []}
    limit = base * accept_factor if base > 0 else 0.0
    for n in range(fitted.k // 2 + 1):
        for name in ("a", "b"):
            val = getattr(current.rows[n], name)
            fval = float(val)
            if name == "a" and val == 1:
                continue
            chosen = None
            for cand in dyadic_candidates(fval, max_frac_bits):
                trial = _with_row(current, n, **{name: cand})
                ber = score(trial)
                report["choices"].append(
                    {"mu": n, "param": name, "candidate": str(cand), "ber": ber})
                if ber <= limit or (base == 0.0 and ber == 0.0):
                    chosen = cand
                    break
            if chosen is None:
                # nothing within tolerance: keep the best-resolution rounding
                chosen = dyadic_candidates(fval, max_frac_bits)[-1]
                budget_ok = False
            current = _with_row(current, n, **{name: chosen})

    gbits = 1
    for r in current.rows:
        for v in (r.a, r.b):
            d = v.denominator
            gbits = max(gbits, d.bit_length() - 1)
    gs = 1 << gbits

    def snap(v):
        return Fraction(round(float(v) * gs), gs)

    rows = [TransferRow(r.a, r.b, snap(r.lo), snap(r.hi)) for r in current.rows]
    rounded = LinearTrackerParams(
        k=current.k, beta=current.beta, rows=rows,
        lambda_l=snap(current.lambda_l),
        lambda_l_by_dc={dc: snap(v) for dc, v in current.lambda_l_by_dc.items()},
        provenance="rounded")
    report["accepted"] = budget_ok
    report["grid_frac_bits"] = gbits
    return rounded, report


def round_params_nearest(fitted, frac_bits=2):
    """Probe-free rounding: every coefficient, domain end, and range bound is
    snapped to the nearest value on the 2^-frac_bits grid (slope-one slopes
    kept exact). Useful when a simulation probe is too expensive."""
    gs = 1 << frac_bits

    def snap(v):
        return Fraction(round(float(v) * gs), gs)

    rows = []
    for r in fitted.rows:
        a = r.a if r.a == 1 else snap(r.a)
        rows.append(TransferRow(a, snap(r.b), snap(r.lo), snap(r.hi)))
    return LinearTrackerParams(
        k=fitted.k, beta=fitted.beta, rows=rows,
        lambda_l=snap(fitted.lambda_l),
        lambda_l_by_dc={dc: snap(v) for dc, v in fitted.lambda_l_by_dc.items()},
        provenance="rounded")


# ---------------------------------------------------------------------------
# published parameter sets

def k2_rs_rounded():
    """Rounded k=2 transfer-function set for the (6,32)-regular class:
    beta = 0.15, no saturation model, lambda_L = 15, 7-bit trackers."""
    return LinearTrackerParams(
        k=2, beta=Fraction(3, 20),
        rows=[TransferRow(Fraction(1), Fraction(1, 4), Fraction(-7, 4), Fraction(15)),
              TransferRow(Fraction(3, 4), Fraction(0), Fraction(-5, 2), Fraction(5, 2))],
        lambda_l=Fraction(15), provenance="rounded")


def k4_ar4ja_rounded(beta=0.25):
    """Rounded k=4 set for the mixed-degree code class with the saturation
    model active (lambda_cap = 6): per-degree lambda_L, 6-bit trackers."""
    return LinearTrackerParams(
        k=4, beta=float_to_fraction(beta),
        rows=[TransferRow(Fraction(1), Fraction(1, 2), Fraction(-1), Fraction(25, 4)),
              TransferRow(Fraction(3, 4), Fraction(1, 4), Fraction(-2), Fraction(11, 4)),
              TransferRow(Fraction(1, 2), Fraction(0), Fraction(-2), Fraction(2))],
        lambda_l=Fraction(25, 4),
        lambda_l_by_dc={3: Fraction(25, 4), 6: Fraction(11, 2)},
        provenance="rounded")
