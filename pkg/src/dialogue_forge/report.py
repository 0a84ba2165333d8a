"""HTML report rendering with embedded vector charts.

The report is a single self-contained file: charts are rendered to SVG and
inlined, so it can be mailed around without assets.  The same figures can be
written out as standalone ``.svg`` files next to the structured report.
Rendering is deterministic: a fixed hash salt keeps SVG element ids stable
and no timestamps are embedded.
"""

from __future__ import annotations

import html
import io
from typing import Any, Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .analyzer import AnalysisReport  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "dialogue-forge"

_SVG_METADATA = {"Date": None, "Creator": None}

TOP_ROWS = 10


def _fig_to_svg(fig) -> str:
    buffer = io.StringIO()
    fig.savefig(buffer, format="svg", metadata=_SVG_METADATA, bbox_inches="tight")
    plt.close(fig)
    return buffer.getvalue()


def domain_metrics_figure(report: AnalysisReport):
    """Grouped bars: success rate and inform F1 for each domain."""
    domains = list(report.per_domain)
    success = [report.per_domain[d]["success_rate"] for d in domains]
    f1 = [report.per_domain[d]["inform_f1"] for d in domains]
    fig, ax = plt.subplots(figsize=(7, 4))
    positions = range(len(domains))
    width = 0.38
    ax.bar([p - width / 2 for p in positions], success, width, label="Success rate",
           color="#4C72B0")
    ax.bar([p + width / 2 for p in positions], f1, width, label="Inform F1",
           color="#DD8452")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(domains)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("Rate")
    ax.set_title("Success rate and inform F1 for each domain")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    return fig

def loop_proportions_figure(report: AnalysisReport):
    """Bars: proportion of each domain's dialogues that ended in a loop."""
    per_domain = report.loop_causes.get("per_domain", {})
    domains = list(per_domain)
    values = [
        (per_domain[d]["looped"] / per_domain[d]["dialogues"])
        if per_domain[d]["dialogues"]
        else 0.0
        for d in domains
    ]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(domains, values, color="#C44E52")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("Loop proportion")
    ax.set_title("Proportion of dialogue loops in each domain")
    ax.grid(True, axis="y", alpha=0.3)
    return fig


def report_figures(report: AnalysisReport) -> dict[str, str]:
    """All report charts as SVG strings, keyed by figure name."""
    return {
        "domain_metrics": _fig_to_svg(domain_metrics_figure(report)),
        "loop_proportions": _fig_to_svg(loop_proportions_figure(report)),
    }


_PAGE_STYLE = """
body { font-family: Georgia, serif; margin: 2em auto; max-width: 60em;
       color: #222; line-height: 1.45; }
h1 { border-bottom: 3px solid #333; padding-bottom: 0.2em; }
h2 { margin-top: 1.6em; border-bottom: 1px solid #999; padding-bottom: 0.15em; }
table { border-collapse: collapse; margin: 0.8em 0; }
th, td { border: 1px solid #bbb; padding: 0.3em 0.8em; text-align: left; }
th { background: #f0f0f0; }
.act { font-family: monospace; }
.share { color: #555; }
ul.confusions { margin: 0.1em 0 0.7em 1.2em; }
.empty { color: #666; font-style: italic; }
.figure { margin: 1em 0; }
"""


def _pct(value: float) -> str:
    return f"{100 * value:.1f}%"


def _metric_row(label: str, stats: Mapping[str, Any]) -> str:
    return (
        f"<tr><td>{html.escape(label)}</td>"
        f"<td>{int(stats['episodes'])}</td>"
        f"<td>{_pct(stats['success_rate'])}</td>"
        f"<td>{_pct(stats['inform_f1'])}</td>"
        f"<td>{stats['avg_turns']:.2f}</td></tr>"
    )


def _confusion_section(table: Mapping[str, Mapping[str, Any]], empty_note: str) -> str:
    rows = sorted(
        table.items(), key=lambda kv: (kv[1]["correct"] - kv[1]["total"], kv[0])
    )
    rows = [r for r in rows if r[1]["total"] > r[1]["correct"]][:TOP_ROWS]
    if not rows:
        return f"<p class='empty'>{html.escape(empty_note)}</p>"
    parts = []
    for act, row in rows:
        total = row["total"]
        parts.append(
            f"<p><span class='act'>{html.escape(act)}</span> "
            f"<span class='share'>({total} occurrences, "
            f"{_pct(row['correct'] / total)} handled correctly)</span></p>"
        )
        items = []
        for parsed, count in sorted(
            row["confusions"].items(), key=lambda kv: (-kv[1], kv[0])
        ):
            items.append(
                f"<li>{_pct(count / total)}: "
                f"<span class='act'>{html.escape(parsed)}</span></li>"
            )
        if row["dropped"]:
            items.append(f"<li>{_pct(row['dropped'] / total)}: dropped</li>")
        parts.append(f"<ul class='confusions'>{''.join(items)}</ul>")
    return "\n".join(parts)


def _audit_list(
    table: Mapping[str, Mapping[str, int]], denominator_key: str, empty_note: str
) -> str:
    if not table:
        return f"<p class='empty'>{html.escape(empty_note)}</p>"
    items = []
    for pattern, row in sorted(
        table.items(), key=lambda kv: (-kv[1]["count"], kv[0])
    ):
        denominator = row.get(denominator_key) or row["count"]
        items.append(
            f"<li>{_pct(row['count'] / denominator)}: "
            f"<span class='act'>{html.escape(pattern)}</span> "
            f"<span class='share'>({row['count']} of {denominator})</span></li>"
        )
    return f"<ul>{''.join(items)}</ul>"


def render_report(report: AnalysisReport, figures: Mapping[str, str] | None = None) -> str:
    """Self-contained HTML document for one analysis report."""
    figures = report_figures(report) if figures is None else figures
    overall = report.overall
    audit = report.system_act_audit
    loops = report.loop_causes

    domain_rows = "".join(
        _metric_row(d, stats) for d, stats in report.per_domain.items()
    )
    overall_row = _metric_row(
        "All domains",
        {
            "episodes": report.episode_count,
            "success_rate": overall["success_rate"],
            "inform_f1": overall["inform_f1"],
            "avg_turns": overall["avg_turns"],
        },
    )

    loop_total = loops.get("looped", 0)
    if loop_total:
        cause_items = "".join(
            f"<li>{_pct(count / loop_total)}: "
            f"<span class='act'>{html.escape(act)}</span> "
            f"<span class='share'>({count} of {loop_total} looped dialogues)</span></li>"
            for act, count in sorted(
                loops["causes"].items(), key=lambda kv: (-kv[1], kv[0])
            )
        )
        loop_block = f"<ul>{cause_items}</ul>"
        if loops.get("other"):
            loop_block += (
                f"<p class='share'>{loops['other']} turn-ceiling failures showed "
                "no repeated request.</p>"
            )
    else:
        loop_block = "<p class='empty'>No dialogue loops observed.</p>"

    totals = audit.get("totals", {})
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Dialogue simulation report</title>
<style>{_PAGE_STYLE}</style>
</head>
<body>
<h1>Dialogue simulation report</h1>
<p>{report.episode_count} simulated dialogues
(pack: <span class='act'>{html.escape(report.pack or "unknown")}</span>,
first seed {report.seeds.get("first")}, fingerprint
<span class='act'>{html.escape(str(report.seeds.get("fingerprint")))}</span>).</p>

<h2>Overall results</h2>
<p>Success rate: <strong>{_pct(overall["success_rate"])}</strong>;
inform F1: <strong>{_pct(overall["inform_f1"])}</strong>;
average user turns: <strong>{overall["avg_turns"]:.2f}</strong>.</p>
<table>
<tr><th>Domain</th><th>Dialogues</th><th>Success rate</th>
<th>Inform F1</th><th>Avg. turns</th></tr>
{overall_row}
{domain_rows}
</table>
<div class="figure">{figures["domain_metrics"]}</div>
<div class="figure">{figures["loop_proportions"]}</div>

<h2>Most confusing user dialogue acts</h2>
<p class='share'>Share of each true user act that was misheard
({_pct(report.nlu_misparse_share())} of all user acts overall).</p>
{_confusion_section(report.nlu_confusion, "No user acts were misunderstood.")}

<h2>Invalid, redundant, and missing system dialogue acts</h2>
<p class='share'>{totals.get("informs", 0)} system informs:
{totals.get("valid", 0)} valid, {totals.get("invalid", 0)} invalid,
{totals.get("redundant", 0)} redundant.</p>
<h3>Invalid system dialogue acts</h3>
{_audit_list(audit["invalid"], "informs", "No invalid system acts.")}
<h3>Redundant system dialogue acts</h3>
{_audit_list(audit["redundant"], "informs", "No redundant system acts.")}
<h3>Missing system dialogue acts</h3>
{_audit_list(audit["missing"], "dialogues", "No goal requests went unanswered.")}

<h2>Most confusing system dialogue acts</h2>
<p class='share'>Share of each true system act the user simulator failed to
perceive ({_pct(report.nlg_misparse_share())} of all system acts overall).</p>
{_confusion_section(report.nlg_confusion, "No system acts confused the user simulator.")}

<h2>User dialogue acts that cause loop</h2>
{loop_block}
</body>
</html>
"""


def comparison_figure(comparison: Mapping[str, Any]):
    """Grouped bars of per-domain success rate, one group color per system."""
    labels = comparison["labels"]
    domains = list(comparison["per_domain"])
    fig, ax = plt.subplots(figsize=(7.5, 4))
    width = 0.8 / max(1, len(labels))
    for i, label in enumerate(labels):
        values = [
            (comparison["per_domain"][d][label] or {}).get("success_rate", 0.0)
            for d in domains
        ]
        offsets = [p + (i - (len(labels) - 1) / 2) * width for p in range(len(domains))]
        ax.bar(offsets, values, width, label=label)
    ax.set_xticks(range(len(domains)))
    ax.set_xticklabels(domains)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("Success rate")
    ax.set_title("Per-domain success rate by system")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    return fig


def render_comparison(comparison: Mapping[str, Any]) -> str:
    """Self-contained HTML document for a multi-system comparison."""
    labels = comparison["labels"]
    metrics = ("success_rate", "inform_f1", "avg_turns")
    titles = {"success_rate": "Success rate", "inform_f1": "Inform F1",
              "avg_turns": "Avg. turns"}

    header = "".join(f"<th>{html.escape(label)}</th>" for label in labels)
    overall_rows = []
    for m in metrics:
        cells = []
        for label in labels:
            value = comparison["overall"][label][m]
            delta = comparison["deltas"][m][label]
            rendered = f"{value:.3f}" if m == "avg_turns" else _pct(value)
            if delta:
                rendered += f" <span class='share'>({delta:+.3f})</span>"
            cells.append(f"<td>{rendered}</td>")
        overall_rows.append(
            f"<tr><td>{titles[m]}</td>{''.join(cells)}</tr>"
        )

    domain_rows = []
    for domain, per_label in comparison["per_domain"].items():
        cells = []
        for label in labels:
            stats = per_label[label]
            cells.append(
                "<td>absent</td>"
                if stats is None
                else f"<td>{_pct(stats['success_rate'])} / {_pct(stats['inform_f1'])}</td>"
            )
        domain_rows.append(f"<tr><td>{html.escape(domain)}</td>{''.join(cells)}</tr>")

    svg = _fig_to_svg(comparison_figure(comparison))
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Dialogue system comparison</title>
<style>{_PAGE_STYLE}</style>
</head>
<body>
<h1>Dialogue system comparison</h1>
<p>{comparison["episode_count"]} dialogues per system on a shared goal
sequence (seed fingerprint
<span class='act'>{html.escape(str(comparison["seeds"].get("fingerprint")))}</span>).
Deltas are against <strong>{html.escape(labels[0])}</strong>.</p>

<h2>Overall results</h2>
<table>
<tr><th>Metric</th>{header}</tr>
{''.join(overall_rows)}
</table>

<h2>Per-domain success rate / inform F1</h2>
<table>
<tr><th>Domain</th>{header}</tr>
{''.join(domain_rows)}
</table>
<div class="figure">{svg}</div>
</body>
</html>
"""
