"""Declarative run configuration.

A single INI file (key-value with nested sections) drives the pipeline;
every key can be overridden on the command line with a flag of the same
dotted name (``--model.seed 7``). Relative paths resolve against the
config file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .forest import ForestConfig
from .regression import HuberConfig

_VALID_COMPONENT_RANGE = range(1, 7)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.replace(",", " ").split()]


def _parse_depth(text: str):
    token = text.strip().lower()
    return None if token in ("none", "unlimited") else int(token)


def _parse_depth_list(text: str):
    return [_parse_depth(tok) for tok in text.replace(",", " ").split()]


def _parse_str_list(text: str) -> list[str]:
    return [tok for tok in text.replace(",", " ").split()]


def _parse_features(text: str):
    token = text.strip().lower()
    return token if token in ("sqrt", "all") else int(token)


# section -> key -> parser; the single source of truth for file keys and
# the dotted CLI override names.
SCHEMA = {
    "paths": {
        "census": str, "cases": str, "geojson": str, "output": str,
    },
    "ingest": {
        "dayfirst": _parse_bool, "drop_invalid": _parse_bool,
    },
    "pca": {
        "components": _parse_int_list, "variance_threshold": float,
    },
    "huber": {
        "tuning_constant": float, "max_iterations": int, "tolerance": float,
    },
    "forest": {
        "trees": int, "max_depth": _parse_depth, "max_features": _parse_features,
        "min_samples_leaf": int, "min_samples_split": int, "features": str,
    },
    "grid": {
        "trees": _parse_int_list, "max_depth": _parse_depth_list,
        "min_samples_leaf": _parse_int_list, "min_samples_split": _parse_int_list,
        "max_features": _parse_str_list,
    },
    "model": {
        "validation_year": int, "train_year_start": int, "train_year_end": int,
        "cv_folds": int, "test_split": float, "seed": int,
    },
}


@dataclass
class RunConfig:
    census_path: Path
    cases_path: Path
    output_dir: Path
    geojson_path: Path | None = None
    dayfirst: bool = False
    drop_invalid: bool = True
    components: list[int] | None = field(default_factory=lambda: [1, 2, 4, 5, 6])
    variance_threshold: float | None = None
    huber: HuberConfig = field(default_factory=HuberConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    forest_features: str = "components"
    grid_axes: dict = field(default_factory=lambda: {
        "trees": [100, 200],
        "max_depth": [4, 8],
        "min_samples_leaf": [5],
        "min_samples_split": [5],
        "max_features": ["sqrt"],
    })
    validation_year: int = 2024
    train_year_start: int | None = None
    train_year_end: int | None = None
    cv_folds: int = 10
    test_split: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.cv_folds < 2:
            raise ConfigurationError("cv_folds must be >= 2")
        if not 0.0 < self.test_split < 1.0:
            raise ConfigurationError("test_split must be in (0, 1)")
        if self.components is not None:
            for comp in self.components:
                if comp not in _VALID_COMPONENT_RANGE:
                    raise ConfigurationError(
                        f"component index {comp} out of range 1..6"
                    )
            if not self.components:
                raise ConfigurationError("component selection is empty")
        if self.variance_threshold is not None and not 0 < self.variance_threshold <= 1:
            raise ConfigurationError("variance_threshold must be in (0, 1]")
        if self.forest_features not in ("components", "indicators"):
            raise ConfigurationError(
                "forest features must be 'components' or 'indicators'"
            )
        if (self.train_year_start is None) != (self.train_year_end is None):
            raise ConfigurationError(
                "train_year_start and train_year_end must be set together"
            )

    def grid(self) -> list[ForestConfig]:
        """Cross product of the configured grid axes."""
        axes = self.grid_axes
        configs = []
        for trees in axes["trees"]:
            for depth in axes["max_depth"]:
                for leaf in axes["min_samples_leaf"]:
                    for split in axes["min_samples_split"]:
                        for feats in axes["max_features"]:
                            configs.append(ForestConfig(
                                n_trees=trees,
                                max_depth=depth,
                                max_features=_parse_features(str(feats))
                                if isinstance(feats, str) else feats,
                                min_samples_leaf=leaf,
                                min_samples_split=split,
                                seed=self.seed,
                            ))
        return configs

    def year_window(self) -> tuple[int, int] | None:
        """Overall ingest filter: the train window widened to include the
        validation year, or no filter when no window is configured."""
        if self.train_year_start is None:
            return None
        return (
            min(self.train_year_start, self.validation_year),
            max(self.train_year_end, self.validation_year),
        )


def _apply_overrides(parser: configparser.ConfigParser, overrides):
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(
                f"override {item!r} is not of the form section.key=value"
            )
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigurationError(
                f"override key {dotted!r} is not of the form section.key"
            )
        section, key = dotted.strip().split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigurationError(f"unknown configuration key {dotted!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())


def load_run_config(path, overrides=None) -> RunConfig:
    """Read an INI run configuration, applying dotted-name overrides."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise ConfigurationError(f"cannot parse {path}: {err}") from err
    _apply_overrides(parser, overrides)

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown configuration section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigurationError(
                    f"unknown key {key!r} in section [{section}]"
                )
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except (ValueError, ConfigurationError) as err:
                raise ConfigurationError(
                    f"bad value for {section}.{key}: {raw!r} ({err})"
                ) from err

    base = path.parent

    def resolve(p):
        return (base / p).resolve() if p is not None else None

    paths = values.get("paths", {})
    for required in ("census", "cases", "output"):
        if required not in paths:
            raise ConfigurationError(f"config is missing paths.{required}")

    pca_section = values.get("pca", {})
    components = pca_section.get("components")
    threshold = pca_section.get("variance_threshold")
    if components is not None and threshold is not None:
        raise ConfigurationError(
            "set either pca.components or pca.variance_threshold, not both"
        )
    if components is None and threshold is None:
        components = [1, 2, 4, 5, 6]

    huber_section = values.get("huber", {})
    model = values.get("model", {})
    seed = model.get("seed", 0)

    forest_section = dict(values.get("forest", {}))
    forest_features = forest_section.pop("features", "components")
    forest_config = ForestConfig(
        n_trees=forest_section.get("trees", 200),
        max_depth=forest_section.get("max_depth", 8),
        max_features=forest_section.get("max_features", "sqrt"),
        min_samples_leaf=forest_section.get("min_samples_leaf", 5),
        min_samples_split=forest_section.get("min_samples_split", 5),
        seed=seed,
    )

    default_axes = RunConfig.__dataclass_fields__["grid_axes"].default_factory()
    grid_axes = {**default_axes, **values.get("grid", {})}

    ingest_section = values.get("ingest", {})
    return RunConfig(
        census_path=resolve(paths["census"]),
        cases_path=resolve(paths["cases"]),
        geojson_path=resolve(paths.get("geojson")),
        output_dir=resolve(paths["output"]),
        dayfirst=ingest_section.get("dayfirst", False),
        drop_invalid=ingest_section.get("drop_invalid", True),
        components=components,
        variance_threshold=threshold,
        huber=HuberConfig(
            tuning_constant=huber_section.get("tuning_constant", 1.345),
            max_iterations=huber_section.get("max_iterations", 50),
            tolerance=huber_section.get("tolerance", 1e-8),
        ),
        forest=forest_config,
        forest_features=forest_features,
        grid_axes=grid_axes,
        validation_year=model.get("validation_year", 2024),
        train_year_start=model.get("train_year_start"),
        train_year_end=model.get("train_year_end"),
        cv_folds=model.get("cv_folds", 10),
        test_split=model.get("test_split", 0.25),
        seed=seed,
    )


DEFAULT_CONFIG_TEMPLATE = """\
# urbanrisk run configuration
# Every key here can be overridden on the command line, e.g.
#   urbanrisk run --config run.ini --model.seed 7

[paths]
census = census.csv
cases = cases.csv
geojson = city.geojson        # optional; enables choropleth output
output = out

[ingest]
dayfirst = false              # parse dates as DD/MM/YYYY first
drop_invalid = true           # drop records with zero denominators

[pca]
components = 1, 2, 4, 5, 6    # or: variance_threshold = 0.7

[huber]
tuning_constant = 1.345
max_iterations = 50
tolerance = 1e-8

[forest]
trees = 200
max_depth = 8
max_features = sqrt
min_samples_leaf = 5
min_samples_split = 5
features = components         # or: indicators

[grid]
trees = 100, 200
max_depth = 4, 8
min_samples_leaf = 5
min_samples_split = 5
max_features = sqrt

[model]
validation_year = 2024
cv_folds = 10
test_split = 0.25
seed = 0
"""


def write_default_config(path):
    Path(path).write_text(DEFAULT_CONFIG_TEMPLATE, encoding="utf-8")
