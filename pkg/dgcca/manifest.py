"""JSON manifests and result files for decompositions and studies.

Manifests carry a schema_version and no timestamps, so the same inputs and
seed reproduce byte-identical files.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from dgcca import rng
from dgcca.dataset import MatrixFormat, save_matrix
from dgcca.decomposition import DecompositionResult, HierarchyResult, pve
from dgcca.simulation import StudySummary

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
MANIFEST_NAME = "manifest.json"
SELECTION_NAME = "selection.json"
STUDY_NAME = "study.json"

_SUFFIX = {MatrixFormat.CSV: ".csv", MatrixFormat.TSV: ".tsv", MatrixFormat.BINARY: ".bin"}


def write_json(data: dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), indent=2, allow_nan=False) + "\n")
    return path


def decomposition_record(result: DecompositionResult) -> dict[str, Any]:
    """Per-view ranks, I0, stage alphas with chosen pairs, and view PVEs."""
    summary = pve(result)
    return {
        "I0": list(result.I0),
        "stage_eigenvalues": result.model.eigenvalues[: max(result.params.L, 1)].tolist(),
        "alphas": [stage.to_dict() for _, stage in sorted(result.alphas.stages.items())],
        "params": result.params.to_dict(),
        "views": [
            {
                "name": view.name,
                "p": view.x_hat.p,
                "rank": view.rank,
                "r_star": view.r_star,
                "r_check": view.r_check,
                "pve_c": view.pve_view_c,
                "pve_d": view.pve_view_d,
            }
            for view in result.views
        ],
        "pve": summary.to_dict(),
    }


def write_view_outputs(result: DecompositionResult, directory: Path, fmt: MatrixFormat) -> dict[str, dict[str, str]]:
    """Write X_hat, C_hat, D_hat and the variable-level PVE table of every view.

    Returns the relative file names per view.
    """
    suffix = _SUFFIX[fmt]
    files: dict[str, dict[str, str]] = {}
    for view in result.views:
        names = {part: f"{view.name}_{part}{suffix}" for part in ("x_hat", "c_hat", "d_hat")}
        save_matrix(view.x_hat, directory / names["x_hat"], fmt)
        save_matrix(view.c_hat, directory / names["c_hat"], fmt)
        save_matrix(view.d_hat, directory / names["d_hat"], fmt)
        labels = view.x_hat.row_labels or tuple(f"var{i}" for i in range(view.x_hat.p))
        table = pd.DataFrame({"variable": labels, "pve_c": view.pve_var_c, "pve_d": view.pve_var_d})
        names["pve"] = f"{view.name}_pve.csv"
        table.to_csv(directory / names["pve"], index=False, float_format="%.17g")
        files[view.name] = names
    return files


def write_decomposition(
    result: DecompositionResult,
    out: Path,
    seed: int,
    fmt: MatrixFormat = MatrixFormat.CSV,
) -> Path:
    """Write a single-level decomposition; returns the manifest path."""
    record = {"schema_version": SCHEMA_VERSION, "seed": seed, "generator": rng.GENERATOR_NAME}
    record.update(decomposition_record(result))
    record["files"] = write_view_outputs(result, out, fmt)
    if result.selection is not None:
        write_json(result.selection.to_dict(), out / SELECTION_NAME)
        record["selection_report"] = SELECTION_NAME
        record["approximations"] = _approximations(result)
    path = write_json(record, out / MANIFEST_NAME)
    logger.info("wrote manifest %s", path)
    return path


def write_hierarchy(
    hierarchy: HierarchyResult,
    out: Path,
    seed: int,
    fmt: MatrixFormat = MatrixFormat.CSV,
) -> Path:
    """Write every level under out/level<t>/ and one top-level manifest."""
    levels = []
    for t, result in enumerate(hierarchy.levels):
        directory = out / f"level{t}"
        record = decomposition_record(result)
        record["files"] = {
            view: {part: f"level{t}/{name}" for part, name in names.items()}
            for view, names in write_view_outputs(result, directory, fmt).items()
        }
        if result.selection is not None:
            write_json(result.selection.to_dict(), directory / SELECTION_NAME)
            record["selection_report"] = f"level{t}/{SELECTION_NAME}"
            record["approximations"] = _approximations(result)
        levels.append(record)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "generator": rng.GENERATOR_NAME,
        "stop_reason": hierarchy.stop_reason.value,
        "cumulative_pve_c": hierarchy.cumulative_pve.tolist(),
        "levels": levels,
    }
    path = write_json(manifest, out / MANIFEST_NAME)
    logger.info("wrote %d-level manifest %s", len(levels), path)
    return path


def _approximations(result: DecompositionResult) -> dict[str, Any]:
    notes = result.selection.notes if result.selection is not None else {}
    return {stage: notes[stage] for stage in ("r_star",) if stage in notes}


def write_study(summary: StudySummary, out: Path, per_rep_csv: bool = False) -> Path:
    """Write the study summary JSON and, optionally, the per-replication tables."""
    record = summary.to_dict()
    if per_rep_csv:
        summary.views.to_csv(out / "replications_views.csv", index=False, float_format="%.17g")
        summary.replications.to_csv(out / "replications.csv", index=False, float_format="%.17g")
        record["files"] = ["replications_views.csv", "replications.csv"]
    path = write_json(record, out / STUDY_NAME)
    logger.info("wrote study summary %s", path)
    return path


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays for json.dumps; NaN becomes null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and math.isnan(value):
        return None
    return value
