import pytest

from urbanrisk import synth
from urbanrisk.ingest import INDICATOR_COLUMNS, IndicatorTable, standardize
from urbanrisk.runconfig import load_run_config


def random_indicator_table(rng, n=94, p=6, standardized=True) -> IndicatorTable:
    """Seeded indicator-shaped table of plain Gaussian columns."""
    columns = INDICATOR_COLUMNS[:p]
    table = IndicatorTable(
        neighborhood_ids=[f"N{i:03d}" for i in range(n)],
        values=rng.normal(size=(n, p)) * rng.uniform(0.5, 3.0, size=p)
        + rng.uniform(-2, 2, size=p),
        columns=columns,
    )
    return standardize(table) if standardized else table


@pytest.fixture(scope="session")
def synth_city(tmp_path_factory):
    """The bundled synthetic-city fixture: inputs plus its run config."""
    root = tmp_path_factory.mktemp("city")
    city = synth.generate(root, n=60, seed=0)
    config = load_run_config(root / "run.ini")
    return {"root": root, "city": city, "config": config}
