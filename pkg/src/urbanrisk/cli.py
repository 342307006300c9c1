"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, pca, fit-ols, fit-rlm,
fit-rf, grid-search, rank, validate, choropleth), plus `run` for the full
pipeline and `synth` for the bundled synthetic-city fixture generator.

Stage subcommands read a run configuration (INI) and operate on the
persisted intermediates in its output directory; every configuration key
can be overridden with a flag of the same dotted name, e.g.
``--model.seed 7`` or ``--pca.components "1,2,4"``.

Exit codes: 0 success, 2 configuration error, 3 data/schema error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import pipeline, synth
from .errors import (
    ConfigurationError,
    JoinError,
    NumericalError,
    ParseError,
    SchemaError,
    StateError,
    UrbanRiskError,
)
from .pipeline import PipelineStageError, StageContext
from .runconfig import SCHEMA, load_run_config


def _exit_code(err: BaseException) -> int:
    if isinstance(err, PipelineStageError) and err.__cause__ is not None:
        return _exit_code(err.__cause__)
    if isinstance(err, ConfigurationError):
        return 2
    if isinstance(err, (SchemaError, ParseError, JoinError, StateError)):
        return 3
    if isinstance(err, NumericalError):
        return 4
    return 3 if isinstance(err, UrbanRiskError) else 1


def _add_config_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="run configuration (INI)")
    for section, keys in SCHEMA.items():
        for key in keys:
            parser.add_argument(
                f"--{section}.{key}",
                dest=f"override::{section}.{key}",
                metavar="VALUE",
                help=argparse.SUPPRESS,
            )


def _load_config(args):
    overrides = [
        f"{name.split('::', 1)[1]}={value}"
        for name, value in vars(args).items()
        if name.startswith("override::") and value is not None
    ]
    return load_run_config(args.config, overrides)


def _context(args) -> StageContext:
    config = _load_config(args)
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    return StageContext(config=config, outdir=outdir)


def cmd_ingest(args):
    ctx = _context(args)
    table, y_train, _ = pipeline.stage_ingest(ctx)
    print(f"ingested {table.n} neighborhoods -> {ctx.outdir}")
    print(f"target densities: min {y_train.min():.2f}, max {y_train.max():.2f}")


def cmd_pca(args):
    ctx = _context(args)
    table = pipeline.read_indicator_table(ctx.outdir)
    model, _, selected = pipeline.stage_pca(ctx, table)
    ratios = ", ".join(f"{r:.1%}" for r in model.explained_ratio)
    print(f"explained variance: {ratios}")
    print(f"selected components: {selected}")


def cmd_fit_ols(args):
    ctx = _context(args)
    scores = pipeline.read_scores(ctx.outdir)
    selected = pipeline.read_selected(ctx.outdir)
    y = pipeline.read_target(ctx.outdir)
    _, fit, report = pipeline.stage_ols(ctx, scores, selected, y)
    print(f"OLS R² = {fit.r_squared:.4f}, adjusted = {fit.adj_r_squared:.4f}")
    for test, result, verdict in report.rows():
        print(f"  {test}: {result} -> {verdict}")


def cmd_fit_rlm(args):
    ctx = _context(args)
    scores = pipeline.read_scores(ctx.outdir)
    selected = pipeline.read_selected(ctx.outdir)
    y = pipeline.read_target(ctx.outdir)
    fit = pipeline.stage_rlm(ctx, scores.select(selected), y)
    print(f"Huber fit: pseudo-R² = {fit.pseudo_r_squared:.4f} "
          f"({fit.iterations} iterations, converged={fit.converged})")


def cmd_fit_rf(args):
    ctx = _context(args)
    table = pipeline.read_indicator_table(ctx.outdir)
    scores = pipeline.read_scores(ctx.outdir)
    selected = pipeline.read_selected(ctx.outdir)
    y_map = pipeline.read_target(ctx.outdir)
    restricted = scores.select(selected)
    y = np.array([y_map[n] for n in restricted.neighborhood_ids])
    pipeline.stage_forest(ctx, table, restricted, y, use_grid=False)
    rows = pipeline.read_table(ctx.outdir / "forest_eval.csv")
    stats = {r["statistic"]: r["value"] for r in rows}
    print(f"forest: test R² = {float(stats['test_r2']):.4f}, "
          f"CV mean R² = {float(stats['cv_mean_r2']):.4f}")


def cmd_grid_search(args):
    ctx = _context(args)
    table = pipeline.read_indicator_table(ctx.outdir)
    scores = pipeline.read_scores(ctx.outdir)
    selected = pipeline.read_selected(ctx.outdir)
    y_map = pipeline.read_target(ctx.outdir)
    restricted = scores.select(selected)
    y = np.array([y_map[n] for n in restricted.neighborhood_ids])
    features = pipeline.forest_features(ctx.config, table, restricted)
    search = pipeline.stage_grid(ctx, features, y)
    best = search.best_config
    print(f"searched {len(search.grid)} configurations; best: "
          f"trees={best.n_trees} depth={best.max_depth} "
          f"features={best.max_features} leaf={best.min_samples_leaf} "
          f"split={best.min_samples_split} "
          f"(mean R² = {search.per_config_cv[search.best_index].mean_r2:.4f})")


def cmd_rank(args):
    ctx = _context(args)
    predictions = {}
    for model_name in pipeline.MODELS:
        path = ctx.outdir / f"predictions_{model_name}.csv"
        if path.exists():
            predictions[model_name] = pipeline.read_predictions(ctx.outdir, model_name)
    if not predictions:
        raise UrbanRiskError("no predictions_*.csv found; fit a model first")
    rankings = pipeline.stage_rank(ctx, predictions)
    for model_name, built in rankings.items():
        top = ", ".join(built.top(min(5, len(built.entries))))
        print(f"{model_name}: top neighborhoods {top}")


def cmd_validate(args):
    ctx = _context(args)
    observed = pipeline.read_observed(ctx.outdir)
    rankings = {}
    for model_name in pipeline.MODELS:
        path = ctx.outdir / f"ranking_{model_name}.csv"
        if path.exists():
            rankings[model_name] = pipeline.read_ranking(ctx.outdir, model_name)
    if not rankings:
        raise UrbanRiskError("no ranking_*.csv found; run the rank stage first")
    agreements = pipeline.stage_validate(ctx, rankings, observed)
    for model_name, report in agreements.items():
        print(f"{model_name}: rho = {report.spearman_rho:.4f}, "
              f"concordant = {report.concordant_pair_pct:.1f}%")


def cmd_choropleth(args):
    ctx = _context(args)
    if ctx.config.geojson_path is None:
        raise ConfigurationError("paths.geojson is not configured")
    rankings = {}
    for model_name in pipeline.MODELS:
        path = ctx.outdir / f"ranking_{model_name}.csv"
        if path.exists():
            rankings[model_name] = pipeline.read_ranking(ctx.outdir, model_name)
    if not rankings:
        raise UrbanRiskError("no ranking_*.csv found; run the rank stage first")
    pipeline.stage_choropleth(ctx, rankings)
    print(f"wrote choropleth GeoJSON for: {', '.join(rankings)}")


def cmd_run(args):
    config = _load_config(args)
    report = pipeline.run_pipeline(config)
    print(pipeline.render_report(report))
    print(f"artifacts in {config.output_dir}")


def cmd_synth(args):
    years = tuple(int(y) for y in args.years.split("-"))
    if len(years) != 2 or years[0] > years[1]:
        raise ConfigurationError(f"bad year range {args.years!r}")
    city = synth.generate(
        args.out,
        n=args.n,
        seed=args.seed,
        years=years,
        validation_year=args.validation_year,
        contamination=args.contamination,
        case_scale=args.case_scale,
    )
    print(f"synthetic city with {len(city.neighborhood_ids)} neighborhoods "
          f"in {args.out}")
    print(f"contaminated neighborhoods: {', '.join(city.contaminated)}")
    print(f"run the pipeline with: urbanrisk run --config {args.out}/run.ini")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="urbanrisk",
        description="Neighborhood risk modeling pipeline: census indicators, "
                    "PCA, OLS/robust regression, random forest, risk ranking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    stages = [
        ("ingest", cmd_ingest, "parse inputs, derive and standardize indicators"),
        ("pca", cmd_pca, "fit PCA and persist loadings/scores"),
        ("fit-ols", cmd_fit_ols, "fit OLS with diagnostics"),
        ("fit-rlm", cmd_fit_rlm, "fit the Huber robust model"),
        ("fit-rf", cmd_fit_rf, "cross-validate and fit the random forest"),
        ("grid-search", cmd_grid_search, "exhaustive forest grid search"),
        ("rank", cmd_rank, "build risk rankings from model predictions"),
        ("validate", cmd_validate, "score rankings against observed densities"),
        ("choropleth", cmd_choropleth, "inject risk scores into GeoJSON"),
        ("run", cmd_run, "execute the full pipeline"),
    ]
    override_note = (
        "Any configuration key can be overridden with a flag of the same "
        "dotted name, e.g. --model.seed 7, --pca.components \"1,2,4\", "
        "--forest.max_depth none."
    )
    for name, handler, help_text in stages:
        p = sub.add_parser(name, help=help_text, epilog=override_note)
        _add_config_arguments(p)
        p.set_defaults(handler=handler)

    p = sub.add_parser("synth", help="generate the synthetic-city fixture")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--years", default="2015-2024", help="YYYY-YYYY inclusive")
    p.add_argument("--validation-year", type=int, default=2024)
    p.add_argument("--contamination", type=float, default=0.08)
    p.add_argument("--case-scale", type=float, default=1.0)
    p.set_defaults(handler=cmd_synth)

    args = parser.parse_args(argv)
    try:
        args.handler(args)
    except UrbanRiskError as err:
        print(f"error: {err}", file=sys.stderr)
        return _exit_code(err)
    return 0


if __name__ == "__main__":
    sys.exit(main())
