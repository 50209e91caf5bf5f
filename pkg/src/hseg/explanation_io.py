"""Serialization of explanations to their JSON document form.

Layout::

    {"image": "<path>",
     "config": {...},
     "depths": [{"depth": 1,
                 "features": [{"id": i, "coefficient": c}, ...],
                 "selected": [ids], "expanded": [ids]}],
     "stats": {...}}
"""

from __future__ import annotations

import json
import os
from typing import Any

from .engine import Explanation
from .errors import IoError


def explanation_to_dict(explanation: Explanation) -> dict[str, Any]:
    depths = []
    for result in explanation.depths:
        features = [
            {"id": fid, "coefficient": coeff}
            for fid, coeff in zip(
                result.feature_space.feature_ids, result.fit.coefficients
            )
        ]
        depths.append(
            {
                "depth": result.depth,
                "features": features,
                "selected": list(result.selected_ids),
                "expanded": list(result.expanded_ids),
            }
        )
    return {
        "image": explanation.image_ref,
        "config": dict(explanation.config),
        "depths": depths,
        "stats": explanation.stats.to_dict(),
    }


def write_explanation(explanation: Explanation, path: str | os.PathLike) -> None:
    """Write the JSON document; identical explanations yield identical bytes."""
    doc = explanation_to_dict(explanation)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write explanation {path}: {exc}") from exc
