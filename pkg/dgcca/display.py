"""Rich terminal summaries of decompositions and studies."""

import math
from typing import Any

from rich.box import ROUNDED
from rich.console import Console
from rich.panel import Panel
from rich.style import Style
from rich.table import Table
from rich.text import Text

from dgcca.decomposition import DecompositionResult, HierarchyResult
from dgcca.simulation import StudySummary

# Color scheme
COMMON_STYLE = Style(color="cyan", bold=True)
DISTINCTIVE_STYLE = Style(color="magenta", bold=True)
WARNING_STYLE = Style(color="yellow", bold=True)


def _fmt(value: Any, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


class ResultDisplay:
    """Renders result tables to a console (stderr by default)."""

    def __init__(self, console: Console | None = None):
        self.console = console or Console(stderr=True)

    def _make_views_table(self, result: DecompositionResult, title: str) -> Table:
        table = Table(title=title, box=ROUNDED)
        table.add_column("view", style="white")
        table.add_column("p", justify="right")
        table.add_column("rank", justify="right")
        table.add_column("r*", justify="right")
        table.add_column("PVE common", justify="right", style=COMMON_STYLE)
        table.add_column("PVE distinctive", justify="right", style=DISTINCTIVE_STYLE)
        for view in result.views:
            table.add_row(
                view.name,
                str(view.x_hat.p),
                str(view.rank),
                str(view.r_star),
                _fmt(view.pve_view_c),
                _fmt(view.pve_view_d),
            )
        return table

    def _make_stage_table(self, result: DecompositionResult) -> Table | Text:
        if not result.I0:
            return Text("no common stages (I0 is empty)", style=WARNING_STYLE)
        table = Table(title="STAGES", box=ROUNDED)
        table.add_column("stage", style="cyan", justify="right")
        table.add_column("eigenvalue", justify="right")
        table.add_column("alpha", justify="right")
        table.add_column("pair", justify="center")
        table.add_column("sign", justify="center")
        for l, stage in sorted(result.alphas.stages.items()):
            table.add_row(
                str(l),
                _fmt(float(result.model.eigenvalues[l])),
                _fmt(stage.alpha),
                f"({stage.chosen_pair[0]}, {stage.chosen_pair[1]})",
                "+" if stage.sign > 0 else "-",
            )
        return table

    def decomposition(self, result: DecompositionResult, title: str = "DECOMPOSITION") -> None:
        """Print per-view ranks and PVEs, then the retained stages."""
        self.console.print(self._make_views_table(result, title))
        self.console.print(self._make_stage_table(result))

    def hierarchy(self, hierarchy: HierarchyResult) -> None:
        for t, level in enumerate(hierarchy.levels):
            self.decomposition(level, title=f"LEVEL {t}")
        self.console.print(
            Panel(
                Text(f"stopped: {hierarchy.stop_reason.value}"),
                title="HIERARCHY",
                border_style="blue",
            )
        )

    def study(self, summary: StudySummary) -> None:
        """Print mean (sd) of the per-view errors and the replication-level rates."""
        means, sds = summary.view_means(), summary.view_sds()
        table = Table(title=f"SETUP {summary.spec.setup_id}: {summary.reps} replications", box=ROUNDED)
        table.add_column("metric", style="cyan")
        for name in means.index:
            table.add_column(str(name), justify="right")
        for metric in ("err_x", "err_c", "err_d", "err_pve_view", "err_pve_var_median", "spearman", "ndcg"):
            table.add_row(
                metric,
                *(f"{_fmt(means.loc[name, metric])} ({_fmt(sds.loc[name, metric], 2)})" for name in means.index),
            )
        self.console.print(table)

        record = summary.to_dict()
        lines = Text()
        lines.append(f"rho1 of distinctive parts: {_fmt(record['rho1']['mean'], 3)}\n")
        lines.append(f"orthogonal pair detected: {_fmt(record['orthogonal_pair_rate'], 3)}")
        if record["failed_reps"]:
            lines.append(f"\nfailed replications: {record['failed_reps']}", style=WARNING_STYLE)
        accuracy = record["selection_accuracy"]
        if accuracy:
            lines.append("\nselection accuracy: " + ", ".join(f"{k}={_fmt(v, 3)}" for k, v in accuracy.items()))
        self.console.print(Panel(lines, title="REPLICATIONS", border_style="blue"))
