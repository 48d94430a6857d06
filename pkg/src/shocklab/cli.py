"""Command-line interface.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or configuration
error, 3 numeric non-convergence.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import click

from . import experiments as ex
from .dynamics import KINDS as INITIAL_KINDS
from .dynamics import CoupledEnsemble, make_initial
from .errors import NumericError, ShocklabError, UsageError
from .limit_laws import build_table


def _floats(text):
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    if text is None:
        return None
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}") from None


def _rs(text):
    if text is None:
        return None
    out = []
    for v in text.split(","):
        v = v.strip()
        if not v:
            continue
        try:
            out.append(int(v))
        except ValueError:
            out.append(v)
    return tuple(out)


def _run(fn):
    """Map package errors to exit codes."""
    try:
        return fn()
    except NumericError as exc:
        click.echo(f"numeric error: {exc}", err=True)
        for k, v in exc.report.items():
            click.echo(f"  {k} = {v}", err=True)
        sys.exit(3)
    except ShocklabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)


def _spec_options(f):
    opts = [
        click.option("--config", type=click.Path(dir_okay=False), help="YAML experiment config."),
        click.option("--p", "p", help="Right-jump probabilities, comma separated."),
        click.option("--m", "M", help="Particle labels M, comma separated."),
        click.option("--R", "R", help="R values (integers or M, M+k, M-k), comma separated."),
        click.option("--t-grid", help="Increasing times, comma separated."),
        click.option("--s-grid", help="Scaling variables s, comma separated."),
        click.option("--C", "C", help="Offsets for the independence experiment, comma separated."),
        click.option("--replicas", type=int),
        click.option("--seed", type=int),
        click.option("--nu", type=float),
        click.option("--eps", type=float),
        click.option("--alpha", type=float, help="DKW level."),
        click.option("--allowance", type=float, help="Model-error allowance added to DKW bands."),
        click.option("--tolerance", type=float),
        click.option("--trend-slack", type=float),
        click.option("--n-lambda", type=int),
        click.option("--nodes", "m", type=int, help="Nystrom nodes m (default: chosen from p and s)."),
        click.option("--length", "L", type=float, help="Integration interval length L."),
        click.option("--bin-width", type=int, help="Bin width in sites for density_profile."),
        click.option("--pad", type=int, help="Active-window safety pad in sites."),
        click.option("--workers", type=int),
        click.option("--engine", type=click.Choice(["auto", "c", "python"])),
        click.option("--no-timing", is_flag=True, default=None, help="Leave wall_ms empty (byte-reproducible files)."),
        click.option("--cache", type=click.Path(file_okay=False), help="Directory for cached replica arrays."),
        click.option("--out", help="Report CSV path ('-' for stdout)."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _build_spec(kind, config, p, M, R, t_grid, s_grid, C, replicas, seed, nu, eps, alpha, allowance, tolerance,
                trend_slack, n_lambda, m, L, bin_width, pad, workers, engine, no_timing, out):
    overrides = dict(
        kind=kind,
        p=_floats(p),
        M=_ints(M),
        R=_rs(R),
        t_grid=_floats(t_grid),
        s_grid=_floats(s_grid),
        C=_floats(C),
        replicas=replicas,
        seed=seed,
        nu=nu,
        eps=eps,
        alpha=alpha,
        allowance=allowance,
        tolerance=tolerance,
        trend_slack=trend_slack,
        n_lambda=n_lambda,
        m=m,
        L=L,
        bin_width=bin_width,
        pad=pad,
        workers=workers,
        engine=engine,
        timing=None if not no_timing else False,
        out=out,
    )
    if config is not None:
        return ex.parse_config(config, **overrides)
    if kind is None:
        raise UsageError("an experiment kind is required")
    return ex.ExperimentSpec(**{k: v for k, v in overrides.items() if v is not None})


@click.group()
@click.version_option(package_name="artifact", prog_name="shocklab")
def main():
    """Shock fluctuations of the asymmetric simple exclusion process."""


@main.command()
@click.argument("kind", type=click.Choice(ex.KINDS), required=False)
@_spec_options
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), help="Report format (default: from the --out suffix).")
def verify(kind, cache, fmt, **kw):
    """Run one experiment KIND and write its report; exit 1 if a check fails."""

    def go():
        spec = _build_spec(kind, **kw)
        store = ex.ReplicaStore(cache)
        extra = {}
        if spec.kind == "dist_table" and spec.out not in (None, "-"):
            extra["table_dir"] = str(Path(spec.out).parent / "tables")
        rows = ex.run_experiment(spec, store, **extra)
        ex.emit_report(rows, spec.out or "-", fmt)
        bad = [r for r in rows if not r.passed]
        click.echo(f"{spec.kind}: {len(rows) - len(bad)}/{len(rows)} rows pass", err=True)
        return 1 if bad else 0

    sys.exit(_run(go))


@main.command()
@click.option("--ic", type=click.Choice(INITIAL_KINDS), default="shock", show_default=True,
              help="Initial data.")
@click.option("--p", "p", type=float, default=0.75, show_default=True)
@click.option("--m", "M", type=int, default=3, show_default=True, help="Record labels 1..M (0, -1, ... for reversed step).")
@click.option("--t-grid", default="100", show_default=True, help="Checkpoint times, comma separated.")
@click.option("--t-param", type=float, help="Time fixing the shock offset (defaults to the last checkpoint).")
@click.option("--replicas", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=ex.ExperimentSpec.seed, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--engine", type=click.Choice(["auto", "c", "python"]), default="auto", show_default=True)
@click.option("--config", type=click.Path(dir_okay=False), help="YAML file with any of these options.")
@click.option("--out", default="-", show_default=True, help="CSV of replica,time,label,position.")
def simulate(ic, p, M, t_grid, t_param, replicas, seed, workers, engine, config, out):
    """Evolve replicas of one initial condition and dump tracked positions."""

    def go():
        nonlocal ic, p, M, t_grid, replicas, seed, workers, engine, out
        if config is not None:
            import yaml

            try:
                data = yaml.safe_load(Path(config).read_text()) or {}
            except (OSError, yaml.YAMLError) as exc:
                raise UsageError(f"cannot read config {config}: {exc}") from None
            ic = data.get("ic", ic)
            p = data.get("p", p)
            M = data.get("M", M)
            t_grid = ",".join(str(v) for v in data["t_grid"]) if "t_grid" in data else t_grid
            replicas = data.get("replicas", replicas)
            seed = data.get("seed", seed)
        grid = _floats(t_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 0:
            raise UsageError(f"t grid must be non-negative and increasing, got {t_grid!r}")
        if replicas < 1 or M < 1:
            raise UsageError("replicas and M must be >= 1")
        labels = list(range(0, -M, -1)) if ic == "reversed_step" else list(range(1, M + 1))
        tp = grid[-1] if t_param is None else t_param
        seeds = ex.replica_seeds(seed, replicas)
        task = _SimTask(ic, p, tp, tuple(grid), tuple(labels), engine)
        results = ex.map_replicas(task, seeds, workers)
        fh = sys.stdout if out == "-" else open(out, "w", newline="")
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replica", "time", "label", "position"])
            for r, res in enumerate(results):
                for t, positions in zip(grid, res):
                    for lab, x in zip(labels, positions):
                        w.writerow([r, repr(t), lab, x])
        finally:
            if fh is not sys.stdout:
                fh.close()
        return 0

    sys.exit(_run(go))


class _SimTask:
    def __init__(self, ic, p, t_param, grid, labels, engine):
        self.ic, self.p, self.t_param, self.grid, self.labels, self.engine = ic, p, t_param, grid, labels, engine

    def __call__(self, seed):
        lo, hi = min(self.labels), max(self.labels)
        cfg = make_initial(self.ic, self.p, self.t_param, watch=(lo, hi))
        ens = CoupledEnsemble([cfg], seed, p=self.p, engine=self.engine)
        out = []
        for t in self.grid:
            ens.evolve(t)
            out.append([ens.position(0, n) for n in self.labels])
        return out


@main.command()
@click.option("--m", "M", default="1,2,3", show_default=True, help="Values of M, comma separated.")
@click.option("--p", "p", default="0.75", show_default=True, help="Values of p, comma separated.")
@click.option("--s-grid", default="-4:6:0.25", show_default=True, help="Comma list or start:stop:step.")
@click.option("--nodes", type=int, help="Nystrom nodes (default: chosen from p and the interval).")
@click.option("--length", type=float, help="Truncation length of the integration interval.")
@click.option("--n-lambda", type=int, default=256, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True, help="Refinement tolerance.")
@click.option("--no-refine", is_flag=True, help="Skip the refinement pass.")
@click.option("--out", default="tables", show_default=True, help="Output directory.")
def dist(M, p, s_grid, nodes, length, n_lambda, tol, no_refine, out):
    """Tabulate the limit distributions F_{M,p} to CSV files."""

    def go():
        if ":" in s_grid:
            try:
                a, b, h = (float(v) for v in s_grid.split(":"))
            except ValueError:
                raise UsageError(f"bad s grid {s_grid!r}") from None
            if h <= 0 or b < a:
                raise UsageError(f"bad s grid {s_grid!r}")
            n = int(round((b - a) / h)) + 1
            grid = [a + i * h for i in range(n)]
        else:
            grid = list(_floats(s_grid))
        Path(out).mkdir(parents=True, exist_ok=True)
        for pv in _floats(p):
            for Mv in _ints(M):
                table = build_table(Mv, pv, grid, m=nodes, L=length, n_lambda=n_lambda, refine=not no_refine,
                                    tol=tol)
                path = Path(out) / f"F_M{Mv}_p{pv:g}.csv"
                table.write_csv(path)
                defects = table.monotonicity_defects()
                worst = "" if table.refinement is None else f", max refinement change {_nanmax(table.refinement):.2e}"
                click.echo(f"{path}: {len(grid)} points{worst}, monotonicity defects {len(defects)}", err=True)
        return 0

    sys.exit(_run(go))


def _nanmax(a):
    import numpy as np

    return float(np.nanmax(a)) if np.isfinite(a).any() else float("nan")


@main.command()
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--all", "show_all", is_flag=True, help="List passing rows too.")
def report(paths, show_all):
    """Summarize report CSVs, re-deriving every pass flag; exit 1 on any failure."""

    def go():
        failed = 0
        for path in paths:
            rows = ex.read_report(path)
            for r in rows:
                if r["pass"] != r["pass_recomputed"]:
                    raise UsageError(f"{path}: stored pass flag disagrees with its columns for {r}")
            bad = [r for r in rows if not r["pass"]]
            failed += len(bad)
            click.echo(f"{path}: {len(rows) - len(bad)}/{len(rows)} rows pass")
            for r in rows if show_all else bad:
                status = "PASS" if r["pass"] else "FAIL"
                click.echo(
                    f"  {status} {r['kind']:<26} p={r['p']:<5g} M={_opt(r['M'])} R={_opt(r['R'])} t={r['t']:g} "
                    f"s={r['s']:g} estimate={r['estimate']:.5g} reference={r['reference']:.5g} band={r['band']:.4g}"
                )
        return 1 if failed else 0

    sys.exit(_run(go))


def _opt(v):
    return "-" if v is None else v


if __name__ == "__main__":  # pragma: no cover
    main()
