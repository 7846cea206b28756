"""Aligned plain-text tables for evaluation and validity reports."""

from __future__ import annotations

from typing import Any, Optional, Sequence


def _cell(v: Any, digits: int) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def format_table(rows: Sequence[Sequence[Any]], headers: Sequence[str], digits: int = 4,
                 title: Optional[str] = None) -> str:
    cells = [[_cell(v, digits) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    numeric = [all(_is_num(r[i]) for r in rows) if rows else False for i in range(len(headers))]

    def line(values):
        out = []
        for v, w, num in zip(values, widths, numeric):
            out.append(v.rjust(w) if num else v.ljust(w))
        return "  ".join(out).rstrip()

    parts = []
    if title:
        parts.append(title)
    parts.append(line(list(headers)))
    parts.append("  ".join("-" * w for w in widths))
    parts.extend(line(r) for r in cells)
    return "\n".join(parts) + "\n"


def _is_num(v) -> bool:
    return v is None or (isinstance(v, (int, float)) and not isinstance(v, bool))


def pct(v: Optional[float]) -> Optional[str]:
    return None if v is None else f"{100 * v:.2f}%"


def evaluation_table(report: dict) -> str:
    rows = [(c["group_b"], c["condition"], c["group_a"], c["d_uot"], c["r"], c["r_display"],
             c["converged"], c["iters_used"]) for c in report["comparisons"]]
    title = (f"alignment scores  (codebook {report['codebook_id']}, K={report['K']}, "
             f"config {report['config_hash']}, seed {report['seed']})")
    text = format_table(rows, ["examinee", "condition", "reference", "d_uot", "r", "r x100",
                               "converged", "iters"], digits=5, title=title)
    if report.get("reference_pairs"):
        rows = [(c["group_a"], c["group_b"], c["d_uot"], c["r"], c["r_display"])
                for c in report["reference_pairs"]]
        text += "\n" + format_table(rows, ["reference", "compared", "d_uot", "r", "r x100"],
                                    digits=5, title="reference corpora against each other")
    skipped = {k: v for k, v in report.get("skipped_documents", {}).items() if v}
    if skipped:
        text += "\n" + format_table(sorted(skipped.items()), ["corpus", "skipped docs"],
                                    title="documents without value content")
    return text


def validity_table(report: dict) -> str:
    rows = []
    for m in report["methods"]:
        rows.append((m["method"], pct(m["priming_target"]), pct(m["priming_aligned"]),
                     pct(m["priming_opposed"]), pct(m["convergent"]), pct(m["discriminant"]),
                     pct(m.get("predictive")), m.get("cronbach_alpha"), m.get("mean_cv")))
    text = format_table(rows, ["method", "prime target", "prime aligned", "prime opposed",
                               "convergent", "discriminant", "predictive", "alpha", "mean CV"],
                        title="validity" + ("  (Fisher z averaging)" if report.get("fisher_z") else ""))
    notes = []
    for m in report["methods"]:
        for key in ("priming_error", "convergent_error", "discriminant_error",
                    "predictive_error", "reliability_error"):
            if m.get(key):
                notes.append((m["method"], key.replace("_error", ""), m[key]))
    if notes:
        text += "\n" + format_table(notes, ["method", "statistic", "not computable because"])
    return text


def codebook_table(payload: dict) -> str:
    cb = payload["codebook"]
    rows = [(c["id"], c["name"], len(c["members"]), c["n_k"]) for c in cb["codes"]]
    state = payload.get("state", {})
    title = (f"codebook {payload.get('codebook_id', '')}  K={len(cb['codes'])}  "
             f"rounds={len(cb['score_history'])}  stop={state.get('stop_reason') or 'n/a'}")
    text = format_table(rows, ["id", "name", "members", "usage"], digits=2, title=title)
    scores = state.get("scores", [])
    if scores:
        srows = [(i + 1, s["total"], s["distortion_term"], s["per_doc_entropy_term"],
                  s["global_entropy_term"]) for i, s in enumerate(scores)]
        text += "\n" + format_table(srows, ["round", "S", "distortion", "doc entropy",
                                            "global entropy"], digits=6, title="score history")
    return text
