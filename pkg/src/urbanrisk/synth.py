"""Synthetic-city fixture generator.

Real neighborhood microdata cannot be redistributed, so tests and demos run
on a generated city: latent factors drive both the census indicators (via a
mixing matrix plus noise) and a known linear case-density model with a few
grossly contaminated neighborhoods to keep the robust-regression stage
honest. Everything is deterministic in the seed.

Outputs: census.csv, cases.csv, city.geojson (unit-square grid polygons),
truth.csv (uncontaminated planted densities), and run.ini ready for the
full pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

#: Coefficients of the planted density model on the six latent factors,
#: negative on factors 1/2/4, positive on 5/6, zero on 3.
TRUE_COEFFICIENTS = np.array([-95.0, -72.0, 0.0, -60.0, 78.0, 148.0])
TRUE_INTERCEPT = 420.0

# Mixing of latent factors into indicator z-scores (rows: density,
# collective_ratio, vacancy, household, area; column j = factor j).
_MIX = np.array([
    [0.85, -0.30, 0.10, -0.25, 0.28, 0.15],
    [-0.20, 0.80, 0.25, 0.30, -0.35, 0.10],
    [0.15, 0.20, 0.85, -0.30, 0.20, -0.25],
    [-0.30, 0.25, -0.20, 0.80, 0.30, 0.20],
    [0.10, -0.30, 0.25, 0.15, 0.75, -0.35],
])
_INDICATOR_NOISE = 0.08


@dataclass(frozen=True)
class SynthCity:
    neighborhood_ids: list[str]
    factors: np.ndarray
    true_density: np.ndarray
    contaminated: list[str]


def _neighborhood_names(n: int) -> list[str]:
    return [f"ZONE {i:03d}" for i in range(1, n + 1)]


def generate(
    out_dir,
    n: int = 60,
    seed: int = 0,
    years: tuple[int, int] = (2015, 2024),
    validation_year: int = 2024,
    contamination: float = 0.05,
    case_scale: float = 1.0,
) -> SynthCity:
    """Write the full fixture into `out_dir` and return the planted truth."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(99,)))
    ids = _neighborhood_names(n)

    factors = rng.normal(size=(n, 6))
    factors -= factors.mean(axis=0)
    struct = factors @ _MIX.T + rng.normal(size=(n, 5)) * _INDICATOR_NOISE

    density = np.clip(3200.0 + 1000.0 * struct[:, 0], 200.0, None)
    collective_ratio = np.clip(0.035 + 0.015 * struct[:, 1], 0.003, 0.3)
    vacancy = np.clip(0.18 + 0.06 * struct[:, 2], 0.02, 0.6)
    household = np.clip(3.2 + 0.4 * struct[:, 3], 1.7, 6.0)
    area = np.clip(np.exp(1.0 + 0.5 * struct[:, 4]), 0.3, 45.0)

    v0001 = np.maximum(np.rint(density * area), 50)
    v0007 = np.maximum(np.rint(v0001 / household), 10)
    v0003 = np.maximum(np.rint(v0007 / (1.0 - vacancy)), v0007)
    v0004 = np.maximum(np.rint(v0003 * collective_ratio / (1.0 - collective_ratio)), 0)
    v0002 = v0003 + v0004
    v0005 = v0001 / v0007
    v0006 = np.round(rng.uniform(0.5, 4.0, size=n), 2)

    census_lines = ["neighborhood,V0001,V0002,V0003,V0004,V0005,V0006,V0007,AREA_KM2"]
    for i, nid in enumerate(ids):
        census_lines.append(
            f"{nid},{v0001[i]:.0f},{v0002[i]:.0f},{v0003[i]:.0f},{v0004[i]:.0f},"
            f"{v0005[i]:.4f},{v0006[i]:.2f},{v0007[i]:.0f},{area[i]:.4f}"
        )
    (out / "census.csv").write_text("\n".join(census_lines) + "\n", encoding="utf-8")

    true_density = TRUE_INTERCEPT + factors @ TRUE_COEFFICIENTS
    true_density = np.clip(true_density * case_scale, 5.0, None)

    n_contaminated = max(1, int(round(contamination * n)))
    contaminated_idx = rng.choice(n, size=n_contaminated, replace=False)
    contaminated = sorted(ids[i] for i in contaminated_idx)

    first_year, last_year = years
    train_years = [y for y in range(first_year, last_year + 1) if y != validation_year]
    case_lines = ["date,neighborhood,notes"]
    for i, nid in enumerate(ids):
        lam = true_density[i] * area[i] / len(train_years)
        for year in train_years:
            count = int(rng.poisson(lam))
            if nid in contaminated:
                count *= 5  # gross y-outlier in the training target
            for _ in range(count):
                day = int(rng.integers(1, 366))
                date = _day_of_year(year, day)
                case_lines.append(f"{date},{nid},synthetic")
        lam_val = true_density[i] * area[i] / len(train_years)
        for _ in range(int(rng.poisson(lam_val))):
            day = int(rng.integers(1, 366))
            case_lines.append(f"{_day_of_year(validation_year, day)},{nid},synthetic")
    (out / "cases.csv").write_text("\n".join(case_lines) + "\n", encoding="utf-8")

    truth_lines = ["neighborhood,true_density"]
    truth_lines += [f"{nid},{float(true_density[i])!r}" for i, nid in enumerate(ids)]
    (out / "truth.csv").write_text("\n".join(truth_lines) + "\n", encoding="utf-8")

    _write_grid_geojson(out / "city.geojson", ids)
    _write_run_config(out, years, validation_year, seed)
    return SynthCity(
        neighborhood_ids=ids,
        factors=factors,
        true_density=true_density,
        contaminated=contaminated,
    )


def _day_of_year(year: int, day: int) -> str:
    import datetime

    date = datetime.date(year, 1, 1) + datetime.timedelta(days=day - 1)
    if date.year != year:  # day 366 in a non-leap year
        date = datetime.date(year, 12, 31)
    return date.isoformat()


def _write_grid_geojson(path: Path, ids: list[str]):
    """Unit squares on a grid, one per neighborhood, id in properties."""
    cols = int(np.ceil(np.sqrt(len(ids))))
    features = []
    for i, nid in enumerate(ids):
        cx, cy = i % cols, i // cols
        ring = [
            [cx, cy], [cx + 1, cy], [cx + 1, cy + 1], [cx, cy + 1], [cx, cy],
        ]
        features.append({
            "type": "Feature",
            "properties": {"id": nid},
            "geometry": {"type": "Polygon", "coordinates": [ring]},
        })
    collection = {"type": "FeatureCollection", "features": features}
    path.write_text(
        json.dumps(collection, ensure_ascii=False, indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _write_run_config(out: Path, years, validation_year, seed):
    lines = [
        "[paths]",
        "census = census.csv",
        "cases = cases.csv",
        "geojson = city.geojson",
        "output = out",
        "",
        "[pca]",
        "components = 1, 2, 4, 5, 6",
        "",
        "[model]",
        f"validation_year = {validation_year}",
        f"train_year_start = {years[0]}",
        f"train_year_end = {years[1]}",
        "cv_folds = 10",
        "test_split = 0.25",
        f"seed = {seed}",
        "",
        "[grid]",
        "trees = 100, 200",
        "max_depth = 4, 8",
        "min_samples_leaf = 5",
        "min_samples_split = 5",
        "max_features = sqrt",
        "",
    ]
    (out / "run.ini").write_text("\n".join(lines), encoding="utf-8")
