"""Command-line interface: estimate, simulate, study, bayes.

Every run writes a manifest (subcommand, resolved options, input file
digests, seed, tool version, timestamps) sufficient to reproduce it.
Exit codes: 0 on success, 2 for input or usage problems, 3 for
numerical failures.

Usage sketch:

    hookrate estimate survey.csv --method mem1 --method cpue --bootstrap 1000
    hookrate simulate --preset sc2 --lambda-t 5e-4 --lambda-nt 1e-3 --out fake.csv
    hookrate study --preset paper --scenario sc1 --out-dir results/
    hookrate bayes survey.csv --model mem1 --chains 4 --draws 2000
"""

from __future__ import annotations

import datetime
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click

from . import __version__
from .bayes import PriorSpec, export_samples, prior_distance, sample_posterior, summarize_posterior
from .errors import DataValidationError, HookrateError, SoakSpreadError
from .estimators import EstimateResult, Method, cpue, fit_mem1, fit_mem2, fit_regular, fit_sem_closed
from .likelihoods import MemModel, SemVariant
from .optimize import OptimizerConfig, fit_numeric
from .records import Dataset, parse_hook_records, parse_records, pool, write_records
from .simulate import SCENARIO_PRESETS, Scenario, simulate_dataset
from .study import StudyGrid, analytic_vs_numeric, run_study, write_figures, write_tables
from .uncertainty import bootstrap, with_asymptotic_covariance

EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

# CLI method names: (estimator, refit numerically?)
METHOD_CHOICES = {
    "cpue": (Method.CPUE, False),
    "hovgard": (Method.HOVGARD, False),
    "mem1": (Method.MEM1, False),
    "mem2": (Method.MEM2, False),
    "regular": (Method.MEM_REGULAR, False),
    "sem": (Method.SEM1, False),
    "sem2": (Method.SEM2, False),
    "mem1-num": (Method.MEM1, True),
    "mem2-num": (Method.MEM2, True),
    "sem-num": (Method.SEM1, True),
    "sem2-num": (Method.SEM2, True),
}
DEFAULT_METHODS = ("cpue", "mem1", "mem2", "sem-num")


@dataclass
class RunManifest:
    """Everything needed to rerun a command and get the same bytes out."""

    subcommand: str
    version: str
    started_utc: str
    seed: int | None
    config: dict
    input_digests: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = asdict(self)
        payload["finished_utc"] = _now()
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(subcommand, seed, config, inputs=()) -> RunManifest:
    return RunManifest(
        subcommand=subcommand,
        version=__version__,
        started_utc=_now(),
        seed=seed,
        config={k: v for k, v in config.items() if not k.startswith("_")},
        input_digests={str(p): _digest(p) for p in inputs},
    )


def _default_manifest_path(primary_output: Path | None) -> Path:
    if primary_output is None:
        return Path("hookrate-manifest.json")
    primary_output = Path(primary_output)
    if primary_output.suffix:
        return primary_output.with_suffix(primary_output.suffix + ".manifest.json")
    return primary_output / "manifest.json"


def _load_dataset(path: str, hook_level: bool) -> Dataset:
    try:
        with open(path, newline="") as fh:
            return parse_hook_records(fh) if hook_level else parse_records(fh)
    except FileNotFoundError:
        click.echo(f"error: input file not found: {path}", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    except DataValidationError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_INPUT_ERROR)


@click.group()
@click.version_option(version=__version__, prog_name="hookrate")
def cli():
    """Longline relative-abundance indices under hook competition."""


# ----------------------------------------------------------------- estimate


def _fit_one(group: Dataset, method_name: str, soak_tolerance: float):
    """Returns (EstimateResult | None, note, degenerate_flag)."""
    method, numeric = METHOD_CHOICES[method_name]
    if numeric:
        res, diag = fit_numeric(group, method)
        note = "degenerate fit (weak likelihood peak)" if diag.degenerate else ""
        return res, note, diag.degenerate
    if method is Method.CPUE:
        value = cpue(group)
        return EstimateResult(method=Method.CPUE, lambda_target=value), "", False
    pooled = pool(group, soak_tolerance)
    if method is Method.HOVGARD:
        from .estimators import hovgard_lambda

        lam = hovgard_lambda(pooled)
        return (
            EstimateResult(method=Method.HOVGARD, lambda_target=None),
            f"overall pressure {lam:.4g}/min, all species combined",
            False,
        )
    if method is Method.MEM1:
        res = fit_mem1(pooled)
        if res.p_nontarget is not None and 0 < res.p_nontarget < 1:
            res = with_asymptotic_covariance(res, pooled.n_hooks_total, pooled.soak_minutes)
        return res, "", False
    if method is Method.MEM2:
        res = fit_mem2(pooled)
        if res.p_nontarget is not None and 0 < res.p_nontarget < 1:
            res = with_asymptotic_covariance(res, pooled.n_hooks_total, pooled.soak_minutes)
        return res, "", False
    if method is Method.MEM_REGULAR:
        return fit_regular(pooled), "", False
    return fit_sem_closed(group, SemVariant(method.value)), "", False


def _group_label(key) -> str:
    year, area = key
    if year is None and area is None:
        return "(all)"
    return f"year={year if year is not None else '-'} area={area if area is not None else '-'}"


@cli.command()
@click.argument("input_file", type=click.Path())
@click.option("--hook-level", is_flag=True, help="Input is one row per hook (condition codes).")
@click.option(
    "--method",
    "methods",
    multiple=True,
    type=click.Choice(sorted(METHOD_CHOICES)),
    help="Estimator(s) to fit; repeatable. Default: cpue, mem1, mem2, sem-num.",
)
@click.option("--year", type=int, default=None, help="Keep only this year.")
@click.option("--area", default=None, help="Keep only this area.")
@click.option("--pool-areas", "pool_areas", default=None, metavar="LABEL", help="Merge all areas into one labelled group before fitting.")
@click.option("--no-group", is_flag=True, help="Fit the whole file as one group.")
@click.option("--bootstrap", "bootstrap_replicates", type=int, default=0, help="Bootstrap replicates for intervals (0 = off).")
@click.option("--level", type=float, default=0.95, show_default=True, help="Interval level.")
@click.option("--seed", type=int, default=0, show_default=True, help="Bootstrap seed.")
@click.option("--soak-tolerance", type=float, default=0.05, show_default=True, help="Relative soak-time spread allowed when pooling.")
@click.option("--json-out", type=click.Path(), default=None, help="Write results as JSON here.")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None, help="Manifest path.")
def estimate(
    input_file,
    hook_level,
    methods,
    year,
    area,
    pool_areas,
    no_group,
    bootstrap_replicates,
    level,
    seed,
    soak_tolerance,
    json_out,
    manifest_path,
):
    """Fit abundance indices per (year, area) group of a survey file."""
    methods = methods or DEFAULT_METHODS
    dataset = _load_dataset(input_file, hook_level)
    manifest = _manifest(
        "estimate",
        seed,
        dict(
            input=str(input_file),
            hook_level=hook_level,
            methods=list(methods),
            year=year,
            area=area,
            pool_areas=pool_areas,
            no_group=no_group,
            bootstrap=bootstrap_replicates,
            level=level,
            soak_tolerance=soak_tolerance,
        ),
        inputs=[input_file],
    )
    dataset = dataset.filtered(year=year, area=area)
    if pool_areas is not None:
        dataset = dataset.merged_label(pool_areas)
    if len(dataset) == 0:
        click.echo("error: no records left after filtering", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    groups = {(None, None): dataset} if no_group else dataset.groups()

    rows = []
    any_success = False
    for key in sorted(groups, key=lambda k: (str(k[0]), str(k[1]))):
        group = groups[key]
        label = _group_label(key)
        for name in methods:
            row = {"group": label, "year": key[0], "area": key[1], "method": name, "n_sets": len(group)}
            if len(group) == 0:
                row["note"] = "no data"
                rows.append(row)
                continue
            try:
                res, note, degenerate = _fit_one(group, name, soak_tolerance)
            except SoakSpreadError:
                row["note"] = "soak times too heterogeneous; use a -num method"
                rows.append(row)
                continue
            except HookrateError as err:
                row["note"] = f"failed: {err}"
                rows.append(row)
                continue
            any_success = True
            row.update(
                {
                    "lambda_target_per_min": res.lambda_target,
                    "lambda_target_per_hour": None if res.lambda_target is None else res.lambda_target * 60.0,
                    "lambda_nontarget_per_min": res.lambda_nontarget,
                    "p_target": res.p_target,
                    "p_nontarget": res.p_nontarget,
                    "sigma2": res.sigma2,
                    "aic": res.aic,
                    "note": note,
                    "degenerate": degenerate,
                }
            )
            if res.covariance is not None and res.lambda_target:
                se = float(res.covariance[0, 0]) ** 0.5
                row["asymptotic_cv_pct"] = 100.0 * se / res.lambda_target
            if bootstrap_replicates:
                method, numeric = METHOD_CHOICES[name]
                try:
                    bs = bootstrap(
                        group,
                        method,
                        replicates=bootstrap_replicates,
                        level=level,
                        seed=seed,
                        numeric=numeric,
                    )
                    row["ci_lower"] = bs.lower
                    row["ci_upper"] = bs.upper
                    row["bootstrap_cv_pct"] = 100.0 * bs.cv
                    row["bootstrap_degenerate"] = bs.n_degenerate
                except HookrateError as err:
                    row["note"] = (row.get("note") or "") + f" bootstrap failed: {err}"
            rows.append(row)

    _print_estimate_table(rows)
    outputs = []
    if json_out:
        Path(json_out).write_text(json.dumps(rows, indent=2, default=float) + "\n")
        outputs.append(json_out)
        click.echo(f"wrote {json_out}", err=True)
    manifest.outputs = [str(o) for o in outputs]
    mpath = Path(manifest_path) if manifest_path else _default_manifest_path(Path(json_out) if json_out else None)
    manifest.write(mpath)
    click.echo(f"manifest: {mpath}", err=True)
    if not any_success:
        click.echo("error: every group failed to fit", err=True)
        sys.exit(EXIT_NUMERICAL_ERROR)


def _print_estimate_table(rows):
    headers = [
        ("group", 26),
        ("method", 9),
        ("lambda_target_per_min", 13),
        ("lambda_target_per_hour", 13),
        ("ci_lower", 12),
        ("ci_upper", 12),
        ("bootstrap_cv_pct", 8),
        ("note", 0),
    ]
    titles = {
        "lambda_target_per_min": "rate/min",
        "lambda_target_per_hour": "rate/hour",
        "bootstrap_cv_pct": "cv%",
    }
    line = "  ".join((titles.get(h, h)).ljust(w) for h, w in headers)
    click.echo(line.rstrip())
    for row in rows:
        cells = []
        for h, w in headers:
            v = row.get(h)
            if isinstance(v, float):
                text = f"{v:.4g}"
            else:
                text = "" if v is None else str(v)
            cells.append(text.ljust(w))
        click.echo("  ".join(cells).rstrip())


# ----------------------------------------------------------------- simulate


@cli.command()
@click.option("--lambda-t", type=float, required=True, help="Target capture rate per hook-minute.")
@click.option("--lambda-nt", type=float, required=True, help="Non-target capture rate.")
@click.option("--preset", type=click.Choice(sorted(SCENARIO_PRESETS)), default=None, help="Escape-probability preset.")
@click.option("--p-t", type=float, default=None, help="Target escape probability (overrides preset).")
@click.option("--p-nt", type=float, default=None, help="Non-target escape probability.")
@click.option("--hooks", type=int, default=220, show_default=True)
@click.option("--sets", type=int, default=20, show_default=True)
@click.option("--soak", type=float, default=120.0, show_default=True, help="Soak minutes.")
@click.option("--seed", type=int, default=None, help="RNG seed (generated and recorded if omitted).")
@click.option("--replicate-index", type=int, default=0, show_default=True)
@click.option("--year", type=int, default=None, help="Stamp records with this year.")
@click.option("--area", default=None, help="Stamp records with this area.")
@click.option("--out", type=click.Path(), required=True, help="Dataset CSV path.")
@click.option("--truth-out", type=click.Path(), default=None, help="Hidden-truth sidecar CSV path.")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
def simulate(
    lambda_t,
    lambda_nt,
    preset,
    p_t,
    p_nt,
    hooks,
    sets,
    soak,
    seed,
    replicate_index,
    year,
    area,
    out,
    truth_out,
    manifest_path,
):
    """Generate one synthetic survey dataset (plus optional latent truth)."""
    if seed is None:
        import secrets

        seed = secrets.randbelow(2**31)
    base_p = SCENARIO_PRESETS.get(preset, (0.0, 0.0))
    p_t = base_p[0] if p_t is None else p_t
    p_nt = base_p[1] if p_nt is None else p_nt
    try:
        scenario = Scenario(
            lambda_target=lambda_t,
            lambda_nontarget=lambda_nt,
            p_target=p_t,
            p_nontarget=p_nt,
            n_hooks=hooks,
            n_sets=sets,
            soak_minutes=soak,
            seed=seed,
        )
    except ValueError as err:
        raise click.UsageError(str(err))
    manifest = _manifest(
        "simulate",
        seed,
        dict(
            lambda_t=lambda_t,
            lambda_nt=lambda_nt,
            preset=preset,
            p_t=p_t,
            p_nt=p_nt,
            hooks=hooks,
            sets=sets,
            soak=soak,
            replicate_index=replicate_index,
            year=year,
            area=area,
        ),
    )
    dataset, sims = simulate_dataset(scenario, replicate_index)
    if year is not None or area is not None:
        from dataclasses import replace as _replace

        dataset = Dataset(tuple(_replace(r, year=year, area=area) for r in dataset))
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        write_records(dataset, fh)
    outputs = [str(out)]
    if truth_out:
        truth_out = Path(truth_out)
        with truth_out.open("w") as fh:
            fh.write("set_id,n_escaped_target,n_escaped_nontarget\n")
            for s in sims:
                fh.write(f"{s.record.set_id},{s.n_escaped_target},{s.n_escaped_nontarget}\n")
        outputs.append(str(truth_out))
    manifest.outputs = outputs
    mpath = Path(manifest_path) if manifest_path else _default_manifest_path(out)
    manifest.write(mpath)
    click.echo(f"wrote {out} ({sets} sets); manifest: {mpath} (seed {seed})")


# ----------------------------------------------------------------- study


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="Grid config JSON.")
@click.option("--preset", type=click.Choice(["paper"]), default=None, help="Built-in full grid (16 cells, 5000 replicates).")
@click.option("--scenario", type=click.Choice(["sc1", "sc2", "sc3", "all"]), default="sc1", show_default=True)
@click.option("--replicates", type=int, default=None, help="Override replicate count.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--estimator", "estimators", multiple=True, help="Estimators to include (default cpue, mem1, mem2, sem1).")
@click.option("--numeric-comparison", is_flag=True, help="Also run the closed-form vs simplex comparison.")
@click.option("--comparison-replicates", type=int, default=200, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
def study(
    config_path,
    preset,
    scenario,
    replicates,
    seed,
    estimators,
    numeric_comparison,
    comparison_replicates,
    out_dir,
):
    """Run a bias/CV simulation study over an abundance grid."""
    if config_path and preset:
        raise click.UsageError("give either --config or --preset, not both")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        click.echo(f"error: cannot create output directory: {err}", err=True)
        sys.exit(EXIT_INPUT_ERROR)

    scenarios = ["sc1", "sc2", "sc3"] if scenario == "all" else [scenario]
    base_kwargs = {}
    if config_path:
        try:
            with open(config_path) as fh:
                grid = StudyGrid.from_json(fh)
        except (OSError, ValueError, TypeError, json.JSONDecodeError) as err:
            click.echo(f"error: bad config: {err}", err=True)
            sys.exit(EXIT_INPUT_ERROR)
        base_kwargs = {
            "lambda_t_values": grid.lambda_t_values,
            "lambda_nt_values": grid.lambda_nt_values,
            "n_hooks": grid.n_hooks,
            "n_sets": grid.n_sets,
            "soak_minutes": grid.soak_minutes,
            "replicates": grid.replicates,
            "estimators": grid.estimators,
            "seed": grid.seed,
        }
        scenarios = [grid.scenario] if scenario == "sc1" else scenarios
    manifest = _manifest(
        "study",
        seed,
        dict(
            config=str(config_path) if config_path else None,
            preset=preset,
            scenarios=scenarios,
            replicates=replicates,
            estimators=list(estimators),
            numeric_comparison=numeric_comparison,
            comparison_replicates=comparison_replicates,
            out_dir=str(out_dir),
        ),
        inputs=[config_path] if config_path else (),
    )

    outputs = []
    for sc in scenarios:
        kwargs = dict(base_kwargs)
        kwargs["scenario"] = sc
        kwargs.setdefault("seed", seed)
        if replicates is not None:
            kwargs["replicates"] = replicates
        if estimators:
            kwargs["estimators"] = tuple(estimators)
        grid = StudyGrid(**kwargs)
        click.echo(
            f"running scenario {sc}: {len(grid.lambda_t_values) * len(grid.lambda_nt_values)} cells "
            f"x {grid.replicates} replicates",
            err=True,
        )
        report = run_study(grid)
        outputs += [str(p) for p in write_tables(report, out_dir)]
        outputs += [str(p) for p in write_figures(report, out_dir)]
        if numeric_comparison:
            cells = analytic_vs_numeric(grid, replicates=comparison_replicates)
            path = out_dir / f"numeric_comparison_{sc}.csv"
            with path.open("w") as fh:
                fh.write(
                    "lambda_t,lambda_nt,n_compared,n_skipped,frac_within_5pct,"
                    "mean_diff,median_diff,p95_diff,degenerate_flag_rate\n"
                )
                for c in cells:
                    fh.write(
                        f"{c.lambda_t},{c.lambda_nt},{c.n_compared},{c.n_skipped},"
                        f"{c.frac_within_5pct},{c.mean_diff},{c.median_diff},{c.p95_diff},"
                        f"{c.degenerate_flag_rate}\n"
                    )
            outputs.append(str(path))
    manifest.outputs = outputs
    mpath = out_dir / "manifest.json"
    manifest.write(mpath)
    click.echo(f"wrote {len(outputs)} files to {out_dir}; manifest: {mpath}")


# ----------------------------------------------------------------- bayes


def _parse_shapes(text, flag):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise click.UsageError(f"{flag} expects two comma-separated positive numbers")
    if a <= 0 or b <= 0:
        raise click.UsageError(f"{flag} shapes must be positive")
    return a, b


@cli.command()
@click.argument("input_file", type=click.Path())
@click.option("--hook-level", is_flag=True, help="Input is one row per hook.")
@click.option("--model", type=click.Choice(["mem1", "mem2", "full"]), default="mem1", show_default=True)
@click.option("--prior-preset", type=click.Choice(["flat", "diffuse"]), default="flat", show_default=True, help="flat = Beta(1,1); diffuse = Beta(0.1,0.1).")
@click.option("--prior-lambda", default=None, metavar="A,B", help="Beta shapes for both rates.")
@click.option("--prior-p", default=None, metavar="A,B", help="Beta shapes for escape probabilities.")
@click.option("--chains", type=int, default=4, show_default=True)
@click.option("--draws", type=int, default=2000, show_default=True)
@click.option("--burn-in", type=int, default=1000, show_default=True)
@click.option("--thin", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--level", type=float, default=0.95, show_default=True)
@click.option("--year", type=int, default=None, help="Keep only this year.")
@click.option("--area", default=None, help="Keep only this area.")
@click.option("--sample-out", type=click.Path(), default=None, help="Write raw draws as CSV.")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
def bayes(
    input_file,
    hook_level,
    model,
    prior_preset,
    prior_lambda,
    prior_p,
    chains,
    draws,
    burn_in,
    thin,
    seed,
    level,
    year,
    area,
    sample_out,
    manifest_path,
):
    """Posterior sampling for the hook-outcome model."""
    prior = PriorSpec() if prior_preset == "flat" else PriorSpec.diffuse()
    if prior_lambda:
        shapes = _parse_shapes(prior_lambda, "--prior-lambda")
        prior = PriorSpec(lambda_target=shapes, lambda_nontarget=shapes, p=prior.p)
    if prior_p:
        prior = PriorSpec(
            lambda_target=prior.lambda_target,
            lambda_nontarget=prior.lambda_nontarget,
            p=_parse_shapes(prior_p, "--prior-p"),
        )
    dataset = _load_dataset(input_file, hook_level).filtered(year=year, area=area)
    manifest = _manifest(
        "bayes",
        seed,
        dict(
            input=str(input_file),
            model=model,
            prior_preset=prior_preset,
            prior_lambda=prior_lambda,
            prior_p=prior_p,
            chains=chains,
            draws=draws,
            burn_in=burn_in,
            thin=thin,
            level=level,
            year=year,
            area=area,
        ),
        inputs=[input_file],
    )
    if len(dataset) == 0:
        click.echo("error: no records left after filtering", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    try:
        sample = sample_posterior(
            dataset,
            MemModel(model),
            prior,
            chains=chains,
            draws=draws,
            burn_in=burn_in,
            seed=seed,
            thinning=thin,
        )
    except HookrateError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_NUMERICAL_ERROR)
    summary = summarize_posterior(sample, level=level)
    if model == "full":
        d_t = prior_distance(sample, prior, "p_target")
        d_nt = prior_distance(sample, prior, "p_nontarget")
        click.echo(
            "WARNING: the four-parameter model cannot identify who escapes; "
            "escape-probability posteriors stay prior-like "
            f"(prior distance: p_target {d_t:.2f}, p_nontarget {d_nt:.2f}; "
            "identified parameters score > 0.9).",
            err=True,
        )
    click.echo(f"{'parameter':<18} {'mean':>12} {'median':>12} {'lower':>12} {'upper':>12} {'rhat':>7}")
    for name, s in summary.items():
        click.echo(
            f"{name:<18} {s.mean:>12.6g} {s.median:>12.6g} {s.lower:>12.6g} {s.upper:>12.6g} {s.rhat:>7.3f}"
        )
    click.echo(f"acceptance rate: {sample.acceptance_rate:.2f}", err=True)
    outputs = []
    if sample_out:
        with open(sample_out, "w") as fh:
            export_samples(sample, fh)
        outputs.append(str(sample_out))
        click.echo(f"wrote {sample_out}", err=True)
    manifest.outputs = outputs
    mpath = Path(manifest_path) if manifest_path else _default_manifest_path(Path(sample_out) if sample_out else None)
    manifest.write(mpath)
    click.echo(f"manifest: {mpath}", err=True)


def main():
    cli()


if __name__ == "__main__":
    main()
