"""CLI interface for dgcca."""

import functools
import json
import logging
import os
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np
import pandas as pd
from rich.console import Console
from rich.logging import RichHandler

from dgcca import rng
from dgcca.config import RunConfig, StudyConfig, build, load_yaml
from dgcca.dataset import MatrixFormat, load_dataset, load_matrix
from dgcca.decomposition import decompose, decompose_hierarchical
from dgcca.display import ResultDisplay
from dgcca.errors import ConfigError, DgccaError, InternalError, ParseError
from dgcca.evaluation import LabeledMatrix, orthogonal_pair_rate, rank_quality, rho1, swiss
from dgcca.manifest import SCHEMA_VERSION, to_jsonable, write_decomposition, write_hierarchy, write_study
from dgcca.params import NuisanceParams
from dgcca.simulation import SETUP_IDS, SetupSpec, run_study
from dgcca.tracing import init_tracing

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool) -> None:
    """Send library logs and warnings to stderr through rich."""
    handler = RichHandler(console=Console(stderr=True), show_path=False)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[handler],
        force=True,
    )
    logging.captureWarnings(True)


def reports_errors(func: Callable[..., Any]) -> Callable[..., Any]:
    """Turn any failure into a JSON object on stderr and exit code 1.

    Errors outside the DgccaError hierarchy are reported as internal_error.
    """

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except Exception as e:
            error = e if isinstance(e, DgccaError) else InternalError(f"{type(e).__name__}: {e}")
            logger.debug("command failed", exc_info=True)
            click.echo(json.dumps(to_jsonable(error.to_dict())), err=True)
            click.get_current_context().exit(1)

    return wrapper


def _split(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [part.strip() for part in value.split(",") if part.strip()]


def _int_list(value: str | None, flag: str) -> list[int] | None:
    parts = _split(value)
    if parts is None:
        return None
    try:
        return [int(part) for part in parts]
    except ValueError as e:
        raise ConfigError(f"{flag} must be comma-separated integers, got {value!r}") from e


def _level_map(value: str | None) -> dict[str, float] | None:
    """Parse "L=0.1,sign=0.05" into a per-stage map."""
    parts = _split(value)
    if parts is None:
        return None
    out = {}
    for part in parts:
        stage, sep, level = part.partition("=")
        if not sep:
            raise ConfigError(f"--significance-map entries look like stage=level, got {part!r}")
        try:
            out[stage.strip()] = float(level)
        except ValueError as e:
            raise ConfigError(f"level for {stage} is not a number: {level!r}") from e
    return out


def _merged(ctx: click.Context, section: str, flags: dict[str, Any]) -> dict[str, Any]:
    """Values from the config file section, overridden by flags that were given."""
    data = dict(ctx.obj["file_config"].get(section) or {})
    data.update({key: value for key, value in flags.items() if value is not None})
    return data


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log per-stage decisions (DEBUG).")
@click.option("--trace-project", default=None, help="Trace pipeline ops to this weave project.")
@click.option(
    "--config",
    "config_path",
    default=None,
    type=click.Path(dir_okay=False),
    help="YAML file with 'decompose' and 'simulate' sections of default flag values.",
)
@click.pass_context
@reports_errors
def cli(ctx: click.Context, verbose: bool, trace_project: str | None, config_path: str | None) -> None:
    """Decompose multi-view data into common, distinctive and noise parts."""
    configure_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj["file_config"] = load_yaml(config_path) if config_path else {}
    if trace_project:
        init_tracing(trace_project)


# --- decompose ----------------------------------------------------------------


@cli.command("decompose")
@click.option("--views", help="Comma-separated view files (CSV, TSV or binary).")
@click.option("--significance", "--alpha", "alpha", type=float, help="Level of every selection test (default 0.05).")
@click.option("--significance-map", help="Per-stage levels, e.g. 'L=0.1,sign=0.05'.")
@click.option("--ranks", help="Comma-separated signal ranks; skips rank selection.")
@click.option("--params", "params_file", type=click.Path(dir_okay=False), help="JSON nuisance parameters; skips selection.")
@click.option("--seed", type=int, help="Master seed (generated and recorded when omitted).")
@click.option("--bootstrap", type=int, help="BCa resamples for sign selection (default 2000).")
@click.option("--levels", type=int, help="Hierarchy depth T (default 1).")
@click.option("--pve-floor", type=float, help="Stop the hierarchy once cumulative common PVE is at most this.")
@click.option("--threads", type=int, help="Worker threads (default: all cores).")
@click.option("--format", "fmt", type=click.Choice([f.value for f in MatrixFormat]), help="Output matrix format.")
@click.option("--k-max", type=int, help="Largest rank the ED estimator considers.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
@click.pass_context
@reports_errors
def decompose_cmd(
    ctx: click.Context,
    views: str | None,
    alpha: float | None,
    significance_map: str | None,
    ranks: str | None,
    params_file: str | None,
    seed: int | None,
    bootstrap: int | None,
    levels: int | None,
    pve_floor: float | None,
    threads: int | None,
    fmt: str | None,
    k_max: int | None,
    out: str | None,
) -> None:
    """Decompose views and write a manifest with C, D and X matrices."""
    flags = {
        "views": _split(views),
        "alpha": alpha,
        "alpha_map": _level_map(significance_map),
        "ranks": _int_list(ranks, "--ranks"),
        "params_file": params_file,
        "seed": seed,
        "bootstrap": bootstrap,
        "levels": levels,
        "pve_floor": pve_floor,
        "threads": threads,
        "format": fmt,
        "k_max": k_max,
        "out": out,
    }
    run = build(RunConfig, {"subcommand": "decompose", **_merged(ctx, "decompose", flags)})
    if not run.views:
        raise ConfigError("--views is required")
    if run.ranks is not None and run.params_file is not None:
        raise ConfigError("--ranks and --params are mutually exclusive")
    out_dir = run.ensure_output_dir()
    master_seed = run.seed if run.seed is not None else rng.fresh_seed()
    if run.seed is None:
        logger.info("no --seed given; using %d", master_seed)

    dataset = load_dataset(run.views)
    params = _load_params(run.params_file) if run.params_file else None
    overrides = {"ranks": run.ranks} if run.ranks is not None else None
    selection = run.selection(master_seed)
    display = ResultDisplay()
    fmt_out = MatrixFormat(run.format)

    if run.levels > 1:
        hierarchy = decompose_hierarchical(
            dataset,
            [params] if params else None,
            max_levels=run.levels,
            pve_floor=run.pve_floor,
            config=selection,
            k_max=run.k_max,
            overrides=overrides,
        )
        manifest = write_hierarchy(hierarchy, out_dir, master_seed, fmt_out)
        display.hierarchy(hierarchy)
    else:
        result = decompose(dataset, params, config=selection, k_max=run.k_max, overrides=overrides)
        manifest = write_decomposition(result, out_dir, master_seed, fmt_out)
        display.decomposition(result)
    click.echo(str(manifest))


def _load_params(path: Path) -> NuisanceParams:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"parameter file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"parameter file {path} is not JSON: {e}") from e
    # a decomposition manifest holds the parameters under "params"
    return NuisanceParams.from_dict(data.get("params", data))


# --- simulate -----------------------------------------------------------------


_SIMULATE_KEYS = {
    "setup", "theta", "p1", "sigma2", "n", "reps", "seed", "select", "alpha", "bootstrap",
    "threads", "k_max", "out", "per_rep_csv",
}


@cli.command("simulate")
@click.option("--setup", type=click.Choice(SETUP_IDS), help="Simulation setting.")
@click.option("--theta", type=float, help="Angle between canonical variables in degrees (setups 1.x).")
@click.option("--p1", type=int, help="Variables in view 1.")
@click.option("--sigma2", type=float, help="Noise variance of view 1.")
@click.option("--n", type=int, help="Samples per replication (default 300).")
@click.option("--reps", type=int, help="Replications (default 100).")
@click.option("--seed", type=int, help="Master seed (generated when omitted).")
@click.option("--select/--true-params", "select", default=None, help="Select nuisance parameters instead of using the truth.")
@click.option("--significance", "--alpha", "alpha", type=float, help="Level of every selection test.")
@click.option("--bootstrap", type=int, help="BCa resamples for sign selection.")
@click.option("--threads", type=int, help="Replications run in parallel (default: all cores).")
@click.option("--k-max", type=int, help="Largest rank the ED estimator considers.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--per-rep-csv", is_flag=True, default=None, help="Also write per-replication CSV tables.")
@click.pass_context
@reports_errors
def simulate_cmd(ctx: click.Context, **flags: Any) -> None:
    """Run a replication study of one simulation setting."""
    values = _merged(ctx, "simulate", flags)
    unknown = set(values) - _SIMULATE_KEYS
    if unknown:
        raise ConfigError(f"unknown simulate settings: {sorted(unknown)}")
    if "setup" not in values:
        raise ConfigError("--setup is required")
    run = build(RunConfig, {"subcommand": "simulate", "out": values.get("out")})
    out_dir = run.ensure_output_dir()
    seed = values["seed"] if values.get("seed") is not None else rng.fresh_seed()

    spec = SetupSpec.create(
        str(values["setup"]),
        p1=values.get("p1", 600),
        sigma2=values.get("sigma2", 1.0),
        theta=values.get("theta", 50.0),
        n=values.get("n", 300),
        seed=seed,
    )
    selection = {"seed": seed}
    for key in ("alpha", "bootstrap"):
        if key in values:
            selection[key] = values[key]
    study = build(
        StudyConfig,
        {
            "reps": values.get("reps", 100),
            "use_true_params": not values.get("select", False),
            "selection": selection,
            "threads": values.get("threads", os.cpu_count() or 1),
            "k_max": values.get("k_max"),
        },
    )
    summary = run_study(spec, study)
    path = write_study(summary, out_dir, per_rep_csv=bool(values.get("per_rep_csv")))
    ResultDisplay().study(summary)
    click.echo(str(path))


# --- evaluate -----------------------------------------------------------------


def _emit(metric: str, payload: dict[str, Any]) -> None:
    click.echo(json.dumps(to_jsonable({"schema_version": SCHEMA_VERSION, "metric": metric, **payload}), indent=2))


def _read_column(path: str, column: str | None = None) -> np.ndarray:
    """One numeric column of a table: the named one, else the last."""
    try:
        frame = pd.read_csv(path) if column else pd.read_csv(path, header=None)
    except FileNotFoundError as e:
        raise ConfigError(f"file not found: {path}") from e
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    if column and column not in frame.columns:
        raise ConfigError(f"{path} has no column {column!r}")
    values = pd.to_numeric(frame[column] if column else frame.iloc[:, -1], errors="coerce").to_numpy(dtype=float)
    if np.isnan(values).any():
        raise ParseError(f"{path} has non-numeric entries in the ranked column")
    return values


def _read_labels(path: str) -> list[str]:
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False)
    except FileNotFoundError as e:
        raise ConfigError(f"labels file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"labels file {path} is empty") from e
    # one label per line, or all labels on one row
    cells = frame.iloc[:, 0] if frame.shape[1] == 1 else frame.iloc[0]
    return [str(cell).strip() for cell in cells]


@cli.group("evaluate")
def evaluate() -> None:
    """Quality metrics printed as JSON."""


@evaluate.command("swiss")
@click.option("--matrix", "matrix_path", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(dir_okay=False))
@reports_errors
def swiss_cmd(matrix_path: str, labels_path: str) -> None:
    """Standardized within-group sum of squares of a labeled matrix."""
    matrix = load_matrix(matrix_path)
    _emit("swiss", {"value": swiss(LabeledMatrix(matrix, tuple(_read_labels(labels_path))))})


@evaluate.command("rho1")
@click.option("--matrices", required=True, help="Comma-separated matrix files.")
@click.option("--ranks", help="Comma-separated ranks (default: numerical ranks).")
@reports_errors
def rho1_cmd(matrices: str, ranks: str | None) -> None:
    """Largest GCCA eigenvalue of the matrices' factor scores."""
    mats = [load_matrix(path) for path in _split(matrices)]
    _emit("rho1", {"value": rho1(mats, _int_list(ranks, "--ranks"))})


@evaluate.command("orthogonality")
@click.option("--matrices", required=True, help="Comma-separated matrix files.")
@click.option("--fdr", type=float, default=0.05, show_default=True, help="Benjamini-Hochberg level.")
@click.option("--ranks", help="Comma-separated ranks (default: numerical ranks).")
@reports_errors
def orthogonality_cmd(matrices: str, fdr: float, ranks: str | None) -> None:
    """Detect matrix pairs whose factors are mutually uncorrelated."""
    if not 0.0 < fdr < 1.0:
        raise ConfigError(f"--fdr must lie in (0, 1), got {fdr}")
    mats = [load_matrix(path) for path in _split(matrices)]
    _emit("orthogonality", orthogonal_pair_rate(mats, fdr, _int_list(ranks, "--ranks")).to_dict())


@evaluate.command("rank-quality")
@click.option("--true", "true_path", required=True, type=click.Path(dir_okay=False))
@click.option("--estimated", "est_path", required=True, type=click.Path(dir_okay=False))
@click.option("--column", default=None, help="Column to rank in both files (e.g. pve_c); default is the last column.")
@click.option("--top-fraction", type=float, default=0.1, show_default=True)
@reports_errors
def rank_quality_cmd(true_path: str, est_path: str, column: str | None, top_fraction: float) -> None:
    """Spearman correlation and nDCG of an estimated variable ranking."""
    if not 0.0 < top_fraction <= 1.0:
        raise ConfigError(f"--top-fraction must lie in (0, 1], got {top_fraction}")
    quality = rank_quality(_read_column(true_path, column), _read_column(est_path, column), top_fraction)
    _emit("rank_quality", quality.to_dict())
