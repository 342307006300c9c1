"""Pipeline orchestration and artifact emission.

Stages run in order (ingest, PCA, OLS + diagnostics, robust fit, forest,
ranking, validation, choropleth), each persisting plain delimited tables
into the output directory. The report is assembled exclusively from those
persisted files, so regenerating it without refitting reproduces every
number; reruns with the same seed are byte-identical. A MANIFEST file lists
every artifact with its content hash and marks aborted runs incomplete.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics, forest, ingest, pca, ranking, regression
from .choropleth import emit_choropleth
from .errors import UrbanRiskError
from .runconfig import RunConfig

MODELS = ("ols", "rlm", "forest")


class PipelineStageError(UrbanRiskError):
    """Wraps a stage failure with the stage name; original is __cause__."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def subseed(master: int, stream: int) -> int:
    """Named deterministic sub-seed of the master seed."""
    state = np.random.SeedSequence(entropy=master, spawn_key=(stream,))
    return int(state.generate_state(1, dtype=np.uint64)[0] % (2**63))


# ---------------------------------------------------------------------------
# Delimited-text artifact helpers
# ---------------------------------------------------------------------------


def write_table(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_table(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def _fmt(value: float) -> str:
    """Full-precision, round-trippable float text."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# Stage functions; each returns in-memory results and records its artifacts
# ---------------------------------------------------------------------------


@dataclass
class StageContext:
    config: RunConfig
    outdir: Path
    artifacts: list[Path] = field(default_factory=list)

    def path(self, name: str) -> Path:
        p = self.outdir / name
        self.artifacts.append(p)
        return p


def stage_ingest(ctx: StageContext):
    cfg = ctx.config
    census = ingest.parse_census(cfg.census_path)
    raw = ingest.derive_indicators(census, drop_invalid=cfg.drop_invalid)
    table = ingest.standardize(raw)
    areas = {r.neighborhood_id: r.area_km2 for r in census
             if r.neighborhood_id in raw.neighborhood_ids}
    cases, rejects = ingest.aggregate_cases(
        cfg.cases_path, areas, year_range=cfg.year_window(), dayfirst=cfg.dayfirst
    )

    write_table(
        ctx.path("indicators_raw.csv"),
        ["neighborhood", *raw.columns],
        [[nid, *map(_fmt, raw.values[i])] for i, nid in enumerate(raw.neighborhood_ids)],
    )
    write_table(
        ctx.path("indicators_standardized.csv"),
        ["neighborhood", *table.columns],
        [[nid, *map(_fmt, table.values[i])]
         for i, nid in enumerate(table.neighborhood_ids)],
    )
    write_table(
        ctx.path("standardization.csv"),
        ["indicator", "mean", "std"],
        [[name, _fmt(table.col_means[i]), _fmt(table.col_stds[i])]
         for i, name in enumerate(table.columns)],
    )
    write_table(
        ctx.path("case_density.csv"),
        ["neighborhood", "year", "case_count", "density"],
        [[c.neighborhood_id, c.year, c.case_count, _fmt(c.density)] for c in cases],
    )
    write_table(
        ctx.path("rejects_cases.csv"),
        ["row", "reason"],
        [[r.row, r.reason] for r in rejects],
    )

    train_cases = [
        c for c in cases
        if c.year != cfg.validation_year
        and (cfg.train_year_start is None
             or cfg.train_year_start <= c.year <= cfg.train_year_end)
    ]
    y_train = ingest.density_by_neighborhood(train_cases, table.neighborhood_ids)
    observed_validation = {
        nid: 0.0 for nid in table.neighborhood_ids
    }
    for c in cases:
        if c.year == cfg.validation_year and c.neighborhood_id in observed_validation:
            observed_validation[c.neighborhood_id] += c.density

    write_table(
        ctx.path("target.csv"),
        ["neighborhood", "density"],
        [[nid, _fmt(y_train[i])] for i, nid in enumerate(table.neighborhood_ids)],
    )
    write_table(
        ctx.path("observed_validation.csv"),
        ["neighborhood", "density"],
        [[nid, _fmt(observed_validation[nid])] for nid in table.neighborhood_ids],
    )
    return table, y_train, observed_validation


def stage_pca(ctx: StageContext, table: ingest.IndicatorTable):
    cfg = ctx.config
    model = pca.fit_pca(table)
    scores = pca.transform(model, table)
    selected = pca.select_components(
        model, explicit=cfg.components, variance_threshold=cfg.variance_threshold
    )

    comp_labels = [f"Component {i}" for i in range(1, model.n_components + 1)]
    write_table(
        ctx.path("pca_loadings.csv"),
        ["indicator", *comp_labels],
        [[name, *map(_fmt, model.loadings[i])]
         for i, name in enumerate(model.indicator_names)],
    )
    cumulative = np.cumsum(model.explained_ratio)
    write_table(
        ctx.path("pca_explained.csv"),
        ["component", "eigenvalue", "explained_ratio", "cumulative_ratio"],
        [[i + 1, _fmt(model.eigenvalues[i]), _fmt(model.explained_ratio[i]),
          _fmt(cumulative[i])] for i in range(model.n_components)],
    )
    write_table(
        ctx.path("scores.csv"),
        ["neighborhood", *comp_labels],
        [[nid, *map(_fmt, scores.scores[i])]
         for i, nid in enumerate(scores.neighborhood_ids)],
    )
    write_table(
        ctx.path("selected_components.csv"),
        ["component"],
        [[c] for c in selected],
    )
    top_rows = []
    for comp in range(1, model.n_components + 1):
        names = pca.top_k_neighborhoods(scores, comp, min(5, scores.n))
        top_rows.append([f"Component {comp}", "; ".join(names)])
    write_table(ctx.path("pca_top_neighborhoods.csv"),
                ["component", "top_neighborhoods"], top_rows)
    return model, scores, selected


def _write_fit_summary(ctx: StageContext, name: str, fit: regression.RegressionFit):
    stat = fit.stat_label
    write_table(
        ctx.path(name),
        ["Variable", "Coef.", "Std. Error", stat, "p-value",
         "95% CI Lower", "95% CI Upper"],
        [[fit.term_names[i], _fmt(fit.coefficients[i]), _fmt(fit.std_errors[i]),
          _fmt(fit.test_stats[i]), _fmt(fit.p_values[i]),
          _fmt(fit.conf_intervals[i, 0]), _fmt(fit.conf_intervals[i, 1])]
         for i in range(len(fit.coefficients))],
    )


def stage_ols(ctx: StageContext, scores: pca.ScoreTable, selected, y_train):
    restricted = scores.select(selected)
    fit = regression.fit_ols(restricted, y_train)
    _write_fit_summary(ctx, "ols_summary.csv", fit)
    write_table(
        ctx.path("ols_stats.csv"),
        ["statistic", "value"],
        [["r_squared", _fmt(fit.r_squared)],
         ["adj_r_squared", _fmt(fit.adj_r_squared)],
         ["residual_std", _fmt(fit.scale)],
         ["n_obs", fit.n_obs]],
    )
    write_table(
        ctx.path("predictions_ols.csv"),
        ["neighborhood", "prediction"],
        [[nid, _fmt(fit.fitted[i])]
         for i, nid in enumerate(restricted.neighborhood_ids)],
    )

    report = diagnostics.diagnose(fit.residuals, restricted.scores)
    write_table(ctx.path("diagnostics.csv"),
                ["Test", "Result", "Interpretation"], report.rows())
    return restricted, fit, report


def stage_rlm(ctx: StageContext, restricted: pca.ScoreTable, y_train):
    fit = regression.fit_huber(restricted, y_train, ctx.config.huber)
    _write_fit_summary(ctx, "rlm_summary.csv", fit)
    write_table(
        ctx.path("rlm_stats.csv"),
        ["statistic", "value"],
        [["pseudo_r_squared", _fmt(fit.pseudo_r_squared)],
         ["mad_scale", _fmt(fit.scale)],
         ["iterations", fit.iterations],
         ["converged", fit.converged],
         ["n_obs", fit.n_obs]],
    )
    write_table(
        ctx.path("predictions_rlm.csv"),
        ["neighborhood", "prediction"],
        [[nid, _fmt(fit.fitted[i])]
         for i, nid in enumerate(restricted.neighborhood_ids)],
    )
    return fit


def forest_features(cfg: RunConfig, table, restricted: pca.ScoreTable):
    return restricted.scores if cfg.forest_features == "components" else table.values


def stage_grid(ctx: StageContext, features, y_train) -> forest.GridSearchResult:
    cfg = ctx.config
    search = forest.grid_search(features, y_train, cfg.grid(),
                                cfg.cv_folds, subseed(cfg.seed, 1))
    write_table(
        ctx.path("grid_results.csv"),
        ["trees", "max_depth", "max_features", "min_samples_leaf",
         "min_samples_split", "mean_r2", "std_r2", "mean_rmse", "best"],
        [[g.n_trees, g.max_depth if g.max_depth is not None else "none",
          g.max_features, g.min_samples_leaf, g.min_samples_split,
          _fmt(r.mean_r2), _fmt(r.std_r2), _fmt(r.mean_rmse),
          int(i == search.best_index)]
         for i, (g, r) in enumerate(zip(search.grid, search.per_config_cv))],
    )
    return search


def stage_forest(ctx: StageContext, table, restricted: pca.ScoreTable, y_train,
                 use_grid: bool = True):
    cfg = ctx.config
    features = forest_features(cfg, table, restricted)
    ids = restricted.neighborhood_ids
    n = features.shape[0]

    cv = forest.kfold_cv(features, y_train, cfg.forest,
                         cfg.cv_folds, subseed(cfg.seed, 1))
    write_table(
        ctx.path("cv_results.csv"),
        ["fold", "r2", "rmse"],
        [[i, _fmt(cv.per_fold_r2[i]), _fmt(cv.per_fold_rmse[i])]
         for i in range(len(cv.per_fold_r2))],
    )

    if use_grid:
        best = stage_grid(ctx, features, y_train).best_config
    else:
        best = cfg.forest

    perm = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2,))
    ).permutation(n)
    n_test = max(1, int(round(cfg.test_split * n)))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    held_out = forest.fit_forest(features[train_idx], y_train[train_idx], best)
    test_pred = forest.predict_forest(held_out, features[test_idx])
    train_pred = forest.predict_forest(held_out, features[train_idx])
    write_table(
        ctx.path("forest_eval.csv"),
        ["statistic", "value"],
        [["test_r2", _fmt(forest.r2_score(y_train[test_idx], test_pred))],
         ["test_rmse", _fmt(forest.rmse(y_train[test_idx], test_pred))],
         ["train_r2", _fmt(forest.r2_score(y_train[train_idx], train_pred))],
         ["cv_mean_r2", _fmt(cv.mean_r2)],
         ["cv_std_r2", _fmt(cv.std_r2)],
         ["n_test", len(test_idx)]],
    )

    final = forest.fit_forest(features, y_train, best)
    predictions = forest.predict_forest(final, features)
    write_table(
        ctx.path("predictions_forest.csv"),
        ["neighborhood", "prediction"],
        [[nid, _fmt(predictions[i])] for i, nid in enumerate(ids)],
    )
    return final, predictions


def stage_rank(ctx: StageContext, predictions: dict[str, dict[str, float]]):
    rankings = {}
    for model_name, pred in predictions.items():
        built = ranking.build_ranking(pred)
        rankings[model_name] = built
        write_table(
            ctx.path(f"ranking_{model_name}.csv"),
            ["neighborhood", "raw_prediction", "normalized_score", "rank"],
            [[e.neighborhood_id, _fmt(e.raw_prediction),
              _fmt(e.normalized_score), e.rank] for e in built.entries],
        )
    return rankings


def stage_validate(ctx: StageContext, rankings, observed: dict[str, float]):
    agreements = {}
    for model_name, built in rankings.items():
        report = ranking.rank_agreement(built, observed)
        agreements[model_name] = report
        rows = [["spearman_rho", _fmt(report.spearman_rho)],
                ["concordant_pair_pct", _fmt(report.concordant_pair_pct)]]
        rows += [[f"top_{k}_overlap", _fmt(v)]
                 for k, v in sorted(report.top_k_overlap.items())]
        write_table(ctx.path(f"agreement_{model_name}.csv"),
                    ["metric", "value"], rows)
    return agreements


def stage_choropleth(ctx: StageContext, rankings):
    cfg = ctx.config
    if cfg.geojson_path is None:
        return
    for model_name, built in rankings.items():
        emit_choropleth(
            built,
            cfg.geojson_path,
            ctx.path(f"choropleth_{model_name}.geojson"),
            rejects_out=ctx.path(f"choropleth_{model_name}_rejects.csv"),
        )


# ---------------------------------------------------------------------------
# Read-back of persisted intermediates (standalone stage subcommands)
# ---------------------------------------------------------------------------


def _require(outdir: Path, name: str) -> Path:
    path = outdir / name
    if not path.exists():
        raise UrbanRiskError(
            f"intermediate {name} not found in {outdir}; run the earlier "
            f"stage first"
        )
    return path


def read_indicator_table(outdir) -> ingest.IndicatorTable:
    outdir = Path(outdir)
    rows = read_table(_require(outdir, "indicators_standardized.csv"))
    params = read_table(_require(outdir, "standardization.csv"))
    columns = tuple(r["indicator"] for r in params)
    return ingest.IndicatorTable(
        neighborhood_ids=[r["neighborhood"] for r in rows],
        values=np.array([[float(r[c]) for c in columns] for r in rows]),
        columns=columns,
        standardized=True,
        col_means=np.array([float(r["mean"]) for r in params]),
        col_stds=np.array([float(r["std"]) for r in params]),
    )


def read_scores(outdir) -> pca.ScoreTable:
    rows = read_table(_require(Path(outdir), "scores.csv"))
    labels = [c for c in rows[0] if c.startswith("Component ")]
    return pca.ScoreTable(
        neighborhood_ids=[r["neighborhood"] for r in rows],
        scores=np.array([[float(r[c]) for c in labels] for r in rows]),
        component_ids=tuple(int(c.split()[1]) for c in labels),
    )


def read_selected(outdir) -> list[int]:
    rows = read_table(_require(Path(outdir), "selected_components.csv"))
    return [int(r["component"]) for r in rows]


def _read_value_map(path) -> dict[str, float]:
    rows = read_table(path)
    keys = list(rows[0].keys())
    return {r[keys[0]]: float(r[keys[1]]) for r in rows}


def read_target(outdir) -> dict[str, float]:
    return _read_value_map(_require(Path(outdir), "target.csv"))


def read_observed(outdir) -> dict[str, float]:
    return _read_value_map(_require(Path(outdir), "observed_validation.csv"))


def read_predictions(outdir, model_name: str) -> dict[str, float]:
    return _read_value_map(
        _require(Path(outdir), f"predictions_{model_name}.csv")
    )


def read_ranking(outdir, model_name: str) -> ranking.RiskRanking:
    rows = read_table(_require(Path(outdir), f"ranking_{model_name}.csv"))
    return ranking.build_ranking(
        {r["neighborhood"]: float(r["raw_prediction"]) for r in rows}
    )


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def _write_manifest(ctx: StageContext, status: str):
    lines = [f"status: {status}"]
    seen = []
    for p in ctx.artifacts:
        if p.exists() and p not in seen:
            seen.append(p)
    for p in sorted(seen):
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        lines.append(f"{digest}  {p.stat().st_size:>10}  {p.name}")
    (ctx.outdir / "MANIFEST").write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_pipeline(config: RunConfig) -> "PipelineReport":
    """Execute every stage, persist all artifacts, and build the report.

    A stage failure writes a MANIFEST marked incomplete (retaining partial
    outputs) and raises PipelineStageError naming the stage.
    """
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    ctx = StageContext(config=config, outdir=outdir)
    stage = "ingest"
    try:
        table, y_train, observed = stage_ingest(ctx)
        stage = "pca"
        model, scores, selected = stage_pca(ctx, table)
        stage = "ols"
        restricted, ols_fit, _ = stage_ols(ctx, scores, selected, y_train)
        stage = "rlm"
        rlm_fit = stage_rlm(ctx, restricted, y_train)
        stage = "forest"
        _, forest_pred = stage_forest(ctx, table, restricted, y_train)
        stage = "rank"
        ids = restricted.neighborhood_ids
        predictions = {
            "ols": dict(zip(ids, ols_fit.fitted)),
            "rlm": dict(zip(ids, rlm_fit.fitted)),
            "forest": dict(zip(ids, forest_pred)),
        }
        rankings = stage_rank(ctx, predictions)
        stage = "validate"
        stage_validate(ctx, rankings, observed)
        stage = "choropleth"
        stage_choropleth(ctx, rankings)
    except Exception as err:
        _write_manifest(ctx, f"incomplete (failed at {stage}: {err})")
        raise PipelineStageError(stage, err) from err
    _write_manifest(ctx, "complete")
    return build_report(outdir)


# ---------------------------------------------------------------------------
# Report, assembled from persisted files only
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineReport:
    """Per-stage summaries parsed back from the persisted artifacts."""

    explained: list[dict[str, str]]
    top_neighborhoods: list[dict[str, str]]
    ols_summary: list[dict[str, str]]
    ols_stats: dict[str, str]
    rlm_summary: list[dict[str, str]]
    rlm_stats: dict[str, str]
    diagnostics: list[dict[str, str]]
    forest_eval: dict[str, str]
    grid: list[dict[str, str]]
    agreements: dict[str, dict[str, str]]
    sign_agreement: tuple[int, int]


def _kv(rows: list[dict[str, str]]) -> dict[str, str]:
    if not rows:
        return {}
    keys = list(rows[0].keys())
    return {row[keys[0]]: row[keys[1]] for row in rows}


def build_report(outdir) -> PipelineReport:
    outdir = Path(outdir)
    ols_summary = read_table(outdir / "ols_summary.csv")
    rlm_summary = read_table(outdir / "rlm_summary.csv")
    matching = sum(
        1 for a, b in zip(ols_summary, rlm_summary)
        if math.copysign(1, float(a["Coef."])) == math.copysign(1, float(b["Coef."]))
    )
    agreements = {}
    for model_name in MODELS:
        path = outdir / f"agreement_{model_name}.csv"
        if path.exists():
            agreements[model_name] = _kv(read_table(path))
    return PipelineReport(
        explained=read_table(outdir / "pca_explained.csv"),
        top_neighborhoods=read_table(outdir / "pca_top_neighborhoods.csv"),
        ols_summary=ols_summary,
        ols_stats=_kv(read_table(outdir / "ols_stats.csv")),
        rlm_summary=rlm_summary,
        rlm_stats=_kv(read_table(outdir / "rlm_stats.csv")),
        diagnostics=read_table(outdir / "diagnostics.csv"),
        forest_eval=_kv(read_table(outdir / "forest_eval.csv")),
        grid=read_table(outdir / "grid_results.csv"),
        agreements=agreements,
        sign_agreement=(matching, len(ols_summary)),
    )


def render_report(report: PipelineReport) -> str:
    """Human-readable summary for the CLI."""
    out = []

    def table(title, rows, columns):
        out.append(title)
        widths = [max(len(c), *(len(str(r[c])) for r in rows)) for c in columns]
        out.append("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
        for r in rows:
            out.append("  ".join(str(r[c]).ljust(w) for c, w in zip(columns, widths)))
        out.append("")

    explained = [
        {"component": r["component"],
         "eigenvalue": f"{float(r['eigenvalue']):.4f}",
         "explained": f"{float(r['explained_ratio']):.1%}",
         "cumulative": f"{float(r['cumulative_ratio']):.1%}"}
        for r in report.explained
    ]
    table("Variance explained by component",
          explained, ["component", "eigenvalue", "explained", "cumulative"])

    def fit_rows(summary):
        stat = "t" if "t" in summary[0] else "z"
        return [
            {"Variable": r["Variable"],
             "Coef.": f"{float(r['Coef.']):.2f}",
             "Std. Error": f"{float(r['Std. Error']):.2f}",
             stat: f"{float(r[stat]):.2f}",
             "p-value": f"{float(r['p-value']):.4g}",
             "95% CI": f"[{float(r['95% CI Lower']):.2f} ; "
                       f"{float(r['95% CI Upper']):.2f}]"}
            for r in summary
        ], stat

    rows, stat = fit_rows(report.ols_summary)
    table(f"OLS coefficients (R² = {float(report.ols_stats['r_squared']):.4f}, "
          f"adjusted = {float(report.ols_stats['adj_r_squared']):.4f})",
          rows, ["Variable", "Coef.", "Std. Error", stat, "p-value", "95% CI"])

    table("OLS diagnostics", report.diagnostics,
          ["Test", "Result", "Interpretation"])

    rows, stat = fit_rows(report.rlm_summary)
    table(f"Robust (Huber) coefficients (pseudo-R² = "
          f"{float(report.rlm_stats['pseudo_r_squared']):.4f}, "
          f"{report.rlm_stats['iterations']} iterations)",
          rows, ["Variable", "Coef.", "Std. Error", stat, "p-value", "95% CI"])

    out.append(
        f"OLS/RLM coefficient sign agreement: {report.sign_agreement[0]} of "
        f"{report.sign_agreement[1]}"
    )
    out.append("")

    out.append("Random forest evaluation")
    for key in ("test_r2", "test_rmse", "cv_mean_r2", "cv_std_r2"):
        out.append(f"  {key} = {float(report.forest_eval[key]):.4f}")
    best = [r for r in report.grid if r["best"] == "1"]
    if best:
        b = best[0]
        out.append(
            f"  best grid config: trees={b['trees']} depth={b['max_depth']} "
            f"features={b['max_features']} leaf={b['min_samples_leaf']} "
            f"split={b['min_samples_split']} (mean R² = {float(b['mean_r2']):.4f})"
        )
    out.append("")

    if report.agreements:
        rows = []
        for model_name, metrics in report.agreements.items():
            row = {"model": model_name}
            row["spearman_rho"] = f"{float(metrics['spearman_rho']):.4f}"
            row["concordant %"] = f"{float(metrics['concordant_pair_pct']):.1f}"
            for key in sorted(metrics):
                if key.startswith("top_"):
                    row[key] = f"{float(metrics[key]):.2f}"
            rows.append(row)
        table("Rank agreement against validation-year observations",
              rows, list(rows[0].keys()))
    return "\n".join(out)
