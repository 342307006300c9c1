"""GeoJSON choropleth emission.

Augments neighborhood polygon features with risk properties from a ranking.
Geometry is passed through untouched; features whose id has no ranking
entry get a null risk_score and are listed in a sidecar rejects report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import JoinError, ParseError
from .ingest import normalize_key
from .ranking import RiskRanking


@dataclass(frozen=True)
class ChoroplethResult:
    matched: int
    unmatched: tuple[str, ...]


def _feature_key(feature: dict, id_property: str):
    props = feature.get("properties") or {}
    if id_property in props:
        return props[id_property]
    return feature.get("id")


def emit_choropleth(
    ranking: RiskRanking,
    geojson_in,
    geojson_out,
    id_property: str = "id",
    rejects_out=None,
) -> ChoroplethResult:
    """Write a copy of the FeatureCollection with risk properties injected.

    Each feature gains ``risk_score`` (normalized), ``risk_rank`` and
    ``raw_prediction``. Ids are normalized the same way census keys are.
    Raises JoinError when not a single feature matches the ranking.
    """
    path_in = Path(geojson_in)
    try:
        collection = json.loads(path_in.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError) as err:
        raise ParseError(f"cannot read GeoJSON {path_in}: {err}") from err
    if not isinstance(collection, dict) or collection.get("type") != "FeatureCollection":
        raise ParseError(f"{path_in}: expected a GeoJSON FeatureCollection")
    features = collection.get("features")
    if not isinstance(features, list):
        raise ParseError(f"{path_in}: FeatureCollection has no features array")

    by_id = {e.neighborhood_id: e for e in ranking.entries}
    matched = 0
    unmatched = []
    out_features = []
    for pos, feature in enumerate(features):
        raw_key = _feature_key(feature, id_property)
        key = normalize_key(str(raw_key)) if raw_key is not None else None
        entry = by_id.get(key) if key is not None else None
        props = dict(feature.get("properties") or {})
        if entry is None:
            props.update(risk_score=None, risk_rank=None, raw_prediction=None)
            unmatched.append(f"feature {pos} (id={raw_key!r})")
        else:
            props.update(
                risk_score=entry.normalized_score,
                risk_rank=entry.rank,
                raw_prediction=entry.raw_prediction,
            )
            matched += 1
        updated = dict(feature)
        updated["properties"] = props
        out_features.append(updated)

    if matched == 0:
        raise JoinError(
            f"{path_in}: no feature id matched the ranking "
            f"(id property {id_property!r})"
        )

    out = dict(collection)
    out["features"] = out_features
    Path(geojson_out).write_text(
        json.dumps(out, ensure_ascii=False, indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    if rejects_out is not None:
        lines = ["feature,reason"]
        lines += [f"{text},no ranking entry" for text in unmatched]
        Path(rejects_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return ChoroplethResult(matched=matched, unmatched=tuple(unmatched))
