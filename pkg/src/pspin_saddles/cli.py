"""Command-line front end.

Every command writes one table (CSV) or one object (JSON) to --out or
standard output.  Exit codes: 0 success, 1 usage or domain error, 2 numerical
failure, 3 a verification suite failed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
import warnings

import click
import numpy as np

from . import __version__
from .complexity import ModelParams, sigma_ell, sigma_total, threshold_E_ell
from .dyson import pair_rate_via_paths
from .ensemble import (det_correlation_check, dyson_simulate, index_diagnostics,
                       index_transfer_fraction, kacrice_moment_estimate, sample_hessian_pair,
                       stream, tail_rate_estimate, tail_trend_ok)
from .errors import DomainError, NumericalError, as_float
from .pair_rate import boundary_continuity, pair_rate
from .scalar import threshold_E_inf
from .variational import bounding_psi, identity_suite, optimize_psi


class VerificationFailed(Exception):
    pass


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no inf/nan; strings keep the file valid
        return v if math.isfinite(v) else _fmt(v)
    return v


def emit(ctx: click.Context, columns, rows, obj=None):
    """Write rows (dicts keyed by columns) as CSV, or obj/rows as JSON."""
    opts = ctx.find_root().obj
    fmt = opts["format"]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
        text = buf.getvalue()
    else:
        config = {k: _jsonable(v) for k, v in sorted(ctx.params.items())}
        meta = {"version": __version__, "command": ctx.info_name, "config": config,
                "seed": config.get("seed")}
        data = obj if obj is not None else [{c: row.get(c) for c in columns} for row in rows]
        text = json.dumps({"meta": meta, "data": _jsonable(data)}, indent=2,
                          sort_keys=False) + "\n"
    out = opts["out"]
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def progress(msg: str):
    click.echo(msg, err=True)


# ---------------------------------------------------------------- option helpers

def _check_p(ctx, param, value):
    if value is not None and value < 3:
        raise click.BadParameter("p must be ≥ 3", ctx=ctx, param=param)
    return value


def _check_pos(ctx, param, value):
    if value is not None and value < 1:
        raise click.BadParameter(f"{param.name} must be ≥ 1", ctx=ctx, param=param)
    return value


def _check_r(ctx, param, value):
    if value is not None and not abs(value) < 1:
        raise click.BadParameter("|r| must be < 1", ctx=ctx, param=param)
    return value


def _check_seed(ctx, param, value):
    if not 0 <= value < 2 ** 64:
        raise click.BadParameter("seed must be a 64-bit unsigned integer", ctx=ctx, param=param)
    return value


p_opt = click.option("--p", "p", type=int, required=True, callback=_check_p,
                     help="Interaction order p (>= 3).")
ell_opt = click.option("--ell", type=click.IntRange(min=0), default=0, show_default=True,
                       help="Index of the critical points.")
seed_opt = click.option("--seed", type=int, default=0, show_default=True,
                        callback=_check_seed, help="Master seed.")
rep_opt = click.option("--replicas", type=int, default=1000, show_default=True,
                       callback=_check_pos)
threads_opt = click.option("--threads", type=click.IntRange(min=1), default=1,
                           show_default=True, help="Worker threads; never changes output.")


@click.group()
@click.version_option(__version__)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Output file (default: standard output).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
@click.pass_context
def cli(ctx, out, fmt):
    """Complexity and second-moment tools for spherical p-spin saddles."""
    ctx.obj = {"out": out, "format": fmt}


# ---------------------------------------------------------------- analytic commands

@cli.command()
@p_opt
@click.option("--ell-max", type=click.IntRange(min=0), default=5, show_default=True)
@click.pass_context
def thresholds(ctx, p, ell_max):
    """Energy thresholds E_ell for ell = 0..ell-max and E_inf."""
    rows = [dict(ell=k, E_ell=threshold_E_ell(ModelParams(p, k))) for k in range(ell_max + 1)]
    rows.append(dict(ell="inf", E_ell=threshold_E_inf(p)))
    emit(ctx, ["ell", "E_ell"], rows)


@cli.command()
@p_opt
@ell_opt
@click.option("--u-min", type=float, required=True)
@click.option("--u-max", type=float, required=True)
@click.option("--points", type=int, default=200, show_default=True, callback=_check_pos)
@click.pass_context
def complexity(ctx, p, ell, u_min, u_max, points):
    """Sigma_ell(u) and Sigma(u) on a uniform energy grid."""
    if u_max < u_min:
        raise DomainError("--u-max must be >= --u-min")
    params = ModelParams(p, ell)
    us = np.linspace(u_min, u_max, points)
    rows = [dict(u=u, sigma_ell=sigma_ell(params, u), sigma_total=sigma_total(p, u)) for u in us]
    emit(ctx, ["u", "sigma_ell", "sigma_total"], rows)


@cli.command("rate-pair")
@p_opt
@click.option("--r", type=float, required=True, callback=_check_r)
@click.option("--ell", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--x-min", type=float, default=2.0, show_default=True)
@click.option("--x-max", type=float, default=4.0, show_default=True)
@click.option("--points", type=int, default=20, show_default=True, callback=_check_pos)
@click.pass_context
def rate_pair(ctx, p, r, ell, x_min, x_max, points):
    """Pair rate J_r(x, y) on a square grid, with the two-time path value."""
    if not 2 <= x_min <= x_max:
        raise DomainError("need 2 <= --x-min <= --x-max")
    xs = np.linspace(x_min, x_max, points)
    rows = []
    for x in xs:
        for y in xs:
            v = pair_rate(p, r, ell, x, y)
            rows.append(dict(x=x, y=y, regime=v.regime.value, rate=as_float(v.value),
                             rate_paths=as_float(pair_rate_via_paths(p, r, ell, x, y))))
    emit(ctx, ["x", "y", "regime", "rate", "rate_paths"], rows)


@cli.command()
@p_opt
@ell_opt
@click.option("--u", "u", type=float, default=None, help="Sets u1 = u2 = u.")
@click.option("--u1", type=float, default=None)
@click.option("--u2", type=float, default=None)
@click.option("--r-min", type=float, default=-0.95, show_default=True, callback=_check_r)
@click.option("--r-max", type=float, default=0.95, show_default=True, callback=_check_r)
@click.option("--points", type=int, default=101, show_default=True, callback=_check_pos)
@click.pass_context
def psi(ctx, p, ell, u, u1, u2, r_min, r_max, points):
    """Bounding function Psi(r, u1, u2) along a grid of overlaps."""
    if u is not None:
        u1 = u2 = u
    if u1 is None or u2 is None:
        raise click.UsageError("give --u or both --u1 and --u2")
    params = ModelParams(p, ell)
    rows = []
    for r in np.linspace(r_min, r_max, points):
        ev = bounding_psi(params, float(r), u1, u2)
        rows.append(dict(r=ev.r, u1=u1, u2=u2, psi=ev.value, branch=ev.branch.value))
    emit(ctx, ["r", "u1", "u2", "psi", "branch"], rows)


@cli.command("psi-opt")
@p_opt
@ell_opt
@click.option("--u-max", type=float, required=True, help="Upper end u* of the energy box.")
@click.option("--u-min", type=float, default=None,
              help="Lower end of the energy box (default -E_ell + 1e-3).")
@click.option("--r-min", type=float, default=-0.95, show_default=True, callback=_check_r)
@click.option("--r-max", type=float, default=0.95, show_default=True, callback=_check_r)
@click.option("--points", type=int, default=201, show_default=True, callback=_check_pos)
@click.pass_context
def psi_opt(ctx, p, ell, u_max, u_min, r_min, r_max, points):
    """Maximise Psi over the box and compare with 2 Sigma_ell(u*)."""
    params = ModelParams(p, ell)
    if u_min is None:
        u_min = -threshold_E_ell(params) + 1e-3
    (r, a, b), val = optimize_psi(params, (r_min, r_max), (u_min, u_max), points=points)
    expected = 2 * sigma_ell(params, u_max)
    obj = dict(argmax=dict(r=r, u1=a, u2=b), value=val, expected=expected)
    emit(ctx, ["r", "u1", "u2", "value", "expected"],
         [dict(r=r, u1=a, u2=b, value=val, expected=expected)], obj)


# ---------------------------------------------------------------- Monte Carlo commands

@cli.command()
@click.option("--n", "n", type=int, default=200, show_default=True, callback=_check_pos)
@click.option("--points", type=int, default=10, show_default=True, callback=_check_pos,
              help="Number of grid times k/points, k = 1..points.")
@rep_opt
@seed_opt
@click.pass_context
def dyson(ctx, n, points, replicas, seed):
    """Top-eigenvalue statistics of the symmetric Brownian motion."""
    grid = np.arange(1, points + 1) / points
    tops = np.empty((replicas, points))
    for k in range(replicas):
        tops[k] = dyson_simulate(n, grid, stream(seed, 51, k))[:, -1]
    rows = [dict(t=t, mean_top=tops[:, j].mean(),
                 sd_top=tops[:, j].std(ddof=1) if replicas > 1 else math.nan,
                 edge=2 * math.sqrt(t)) for j, t in enumerate(grid)]
    emit(ctx, ["t", "mean_top", "sd_top", "edge"], rows)


@cli.command("sample-hessian")
@p_opt
@click.option("--r", type=float, required=True, callback=_check_r)
@click.option("--u1", type=float, required=True)
@click.option("--u2", type=float, required=True)
@click.option("--N", "N", type=click.IntRange(min=4), default=100, show_default=True)
@click.option("--coupled/--no-coupled", default=False, show_default=True)
@seed_opt
@click.pass_context
def sample_hessian(ctx, p, r, u1, u2, N, coupled, seed):
    """One conditional Hessian pair and its index diagnostics."""
    s = sample_hessian_pair(p, r, u1, u2, N, stream(seed, 61), coupled=coupled)
    rep = index_diagnostics(s)
    rows = []
    for i, d in zip((1, 2), rep):
        row = dict(i=i, Q=getattr(s, f"Q{i}"), m_circ=getattr(s, f"m_circ_{i}"), **d)
        if coupled:
            row["coupling_residual"] = s.coupling_residual(i)
        rows.append(row)
    cols = ["i", "index_M", "index_G", "interlaced", "lazutkin", "X", "Q", "m_circ",
            "resolvent_deviation"] + (["coupling_residual"] if coupled else [])
    emit(ctx, cols, rows)


@cli.command("index-check")
@p_opt
@click.option("--r", type=float, required=True, callback=_check_r)
@click.option("--u1", type=float, required=True)
@click.option("--u2", type=float, required=True)
@click.option("--N", "N", type=click.IntRange(min=4), default=200, show_default=True)
@rep_opt
@seed_opt
@click.pass_context
def index_check(ctx, p, r, u1, u2, N, replicas, seed):
    """Fraction of replicas where the Hessian index equals the minor index."""
    res = index_transfer_fraction(p, r, u1, u2, N, replicas, seed)
    row = dict(p=p, r=r, u1=u1, u2=u2, N=N, replicas=replicas, **res)
    emit(ctx, ["p", "r", "u1", "u2", "N", "replicas", "fraction", "interlace_ok",
               "lazutkin_ok", "x_sign_agrees", "checks"], [row])


@cli.command("kac-rice")
@p_opt
@ell_opt
@click.option("--u-min", type=float, default=None, help="Lower end of B (default -E_ell + 1e-4).")
@click.option("--u-max", type=float, default=None, help="Upper end of B (default -E_inf - 1e-4).")
@click.option("--N", "Ns", type=click.IntRange(4, 200), multiple=True, default=(20, 40, 60),
              show_default=True)
@click.option("--r-max", type=float, default=0.6, show_default=True, callback=_check_r)
@click.option("--r-points", type=int, default=25, show_default=True, callback=_check_pos)
@click.option("--u-nodes", type=int, default=12, show_default=True, callback=_check_pos)
@click.option("--f-form", type=click.Choice(["derived", "printed"]), default="derived",
              show_default=True)
@click.option("--profile/--no-profile", default=False, help="Emit the r-profile instead.")
@rep_opt
@seed_opt
@threads_opt
@click.pass_context
def kac_rice(ctx, p, ell, u_min, u_max, Ns, r_max, r_points, u_nodes, f_form, profile,
             replicas, seed, threads):
    """(1/N) log of the Kac-Rice first and second moments."""
    params = ModelParams(p, ell)
    lo = -threshold_E_ell(params) + 1e-4 if u_min is None else u_min
    hi = -threshold_E_inf(p) - 1e-4 if u_max is None else u_max
    rg = np.linspace(-r_max, r_max, r_points)
    rows = []
    for N in Ns:
        progress(f"kac-rice: N={N}")
        res = kacrice_moment_estimate(params, (lo, hi), N, rg, replicas, seed, threads=threads,
                                      u_nodes=u_nodes, f_form=f_form)
        if profile:
            rows += [dict(N=N, r=r, log_integrand_per_N=v)
                     for r, v in zip(res.r_grid, res.r_profile)]
        else:
            rows.append(dict(N=N, log_second_per_N=res.log_second_per_N,
                             log_first_per_N=res.log_first_per_N,
                             log_first_linearized_per_N=res.log_first_linearized_per_N,
                             target=res.target, gap=res.log_second_per_N - res.target,
                             ratio=res.log_second_per_N / res.log_first_per_N,
                             censored=res.censored))
    cols = (["N", "r", "log_integrand_per_N"] if profile else
            ["N", "log_second_per_N", "log_first_per_N", "log_first_linearized_per_N",
             "target", "gap", "ratio", "censored"])
    emit(ctx, cols, rows)


@cli.command("ldp-tail")
@p_opt
@click.option("--r", type=float, required=True, callback=_check_r)
@click.option("--ell", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--x", type=float, required=True)
@click.option("--y", type=float, required=True)
@click.option("--N", "Ns", type=click.IntRange(min=2), multiple=True, default=(30, 60, 90),
              show_default=True)
@click.option("--method", type=click.Choice(["direct", "spike"]), default="direct",
              show_default=True)
@rep_opt
@seed_opt
@click.pass_context
def ldp_tail(ctx, p, r, ell, x, y, Ns, method, replicas, seed):
    """Empirical joint tail rate of the ell-th eigenvalues of a GOE pair."""
    rows = tail_rate_estimate(p, r, ell, x, y, Ns, replicas, seed, method=method)
    ok = tail_trend_ok(rows)
    for row in rows:
        row["trend_ok"] = ok
    emit(ctx, ["N", "hits", "replicas", "method", "estimate", "se", "censored", "target",
               "gap", "trend_ok"], rows)


@cli.command("det-corr")
@p_opt
@click.option("--n", "n", type=click.IntRange(1, 12), default=8, show_default=True)
@click.option("--rho", "rhos", type=click.FloatRange(0, 1), multiple=True,
              default=(0.0, 0.5, 1.0), show_default=True)
@rep_opt
@seed_opt
@click.pass_context
def det_corr(ctx, p, n, rhos, replicas, seed):
    """Chord bound for E[det W_1 det W_2] as a function of rho."""
    rows = det_correlation_check(p, sorted(set(rhos)), n, replicas, seed)
    emit(ctx, ["rho", "r", "g", "se", "lhs", "rhs", "band", "status", "replicas_needed"], rows)


@cli.command()
@p_opt
@ell_opt
@click.pass_context
def verify(ctx, p, ell):
    """Analytic identity suites; exit code 3 when any check fails."""
    params = ModelParams(p, ell)
    rows = [dict(check=k, passed=ok, residual=res)
            for k, (ok, res) in identity_suite(params).items()]
    worst = max(boundary_continuity(p, r) for r in (-0.8, -0.5, -0.2, 0.2, 0.5, 0.8))
    rows.append(dict(check="pair_rate_boundary_continuity", passed=worst <= 1e-9,
                     residual=worst))
    gap = 0.0
    xs = np.linspace(2.05, 4.0, 12)
    for r in (0.2, 0.5, 0.8):
        for x in xs:
            for y in xs:
                gap = max(gap, abs(as_float(pair_rate(p, r, max(ell, 1), x, y).value)
                                   - as_float(pair_rate_via_paths(p, r, max(ell, 1), x, y))))
    rows.append(dict(check="dyson_contraction_matches_pair_rate", passed=gap <= 1e-8,
                     residual=gap))
    emit(ctx, ["check", "passed", "residual"], rows)
    if not all(r["passed"] for r in rows):
        raise VerificationFailed()


# ---------------------------------------------------------------- entry point

def main(argv=None) -> int:
    """Run the CLI and return its exit code."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cli.main(args=argv, prog_name="pspin-saddles", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except DomainError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as e:
        click.echo(f"numerical failure: {e}", err=True)
        return 2
    except VerificationFailed:
        click.echo("verification failed", err=True)
        return 3
    return 0
