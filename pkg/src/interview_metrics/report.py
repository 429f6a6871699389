"""Table layouts, plot-ready series and deterministic JSON/CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .semantic import CROSS_MODEL, SIMILARITY_FIELDS
from .stats import GroupComparison, significance_stars

METRICS_SCHEMA_VERSION = "1"
BUNDLE_SCHEMA_VERSION = "1"

ENTROPY_METRICS = (
    ("entropy_overall", "Overall Transcript"),
    ("entropy_interviewer", "Interviewer Text"),
    ("entropy_interviewee", "Interviewee Response"),
)
LENGTH_METRICS = (
    ("tokens_per_sentence_overall", "Overall Interview"),
    ("tokens_per_sentence_interviewer", "Interviewer"),
    ("tokens_per_sentence_interviewee", "Interviewee"),
)
SIMILARITY_LABELS = dict(zip(SIMILARITY_FIELDS, ("Interviewer Internal", "Interviewee Internal",
                                                 "Cross-Speaker")))


def sim_column(field: str, model: str) -> str:
    return f"{field}__{model}"


def metric_catalog(models: Sequence[str]) -> list[dict]:
    """Rows of the comparison tables, in display order."""
    rows = [{"section": "Information Entropy", "label": lbl, "column": col}
            for col, lbl in ENTROPY_METRICS]
    rows += [{"section": "Sentence Length (Token Count)", "label": lbl, "column": col}
             for col, lbl in LENGTH_METRICS]
    sim_models = list(models) + ([CROSS_MODEL] if models else [])
    for model in sim_models:
        rows += [{"section": f"Semantic Similarity ({model})", "label": SIMILARITY_LABELS[f],
                  "column": sim_column(f, model)} for f in SIMILARITY_FIELDS]
    return rows


def table1_row(section: str, label: str, c: GroupComparison) -> dict:
    return {
        "section": section, "metric": label, "column": c.metric_name,
        "ai_mean": c.ai_mean, "ai_sd": c.ai_sd, "human_mean": c.human_mean, "human_sd": c.human_sd,
        "diff": c.diff, "impr_pct": c.impr_pct, "n_ai": c.n_ai, "n_human": c.n_human,
    }


def table2_row(section: str, label: str, c: GroupComparison, stars: bool = False) -> dict:
    row = {
        "section": section, "metric": label, "column": c.metric_name, "status": "ok",
        "t_stat": c.welch.t, "t_df": c.welch.df, "t_p": c.welch.p,
        "cohens_d": c.cohens_d, "d_ci_lo": c.d_ci_95[0], "d_ci_hi": c.d_ci_95[1],
        "mann_whitney_u": c.mwu.u, "u_p": c.mwu.p, "u_method": c.mwu.method,
        "rank_biserial": c.mwu.rank_biserial, "effect_size": c.effect_label.value,
    }
    if stars:
        row["t_stars"] = significance_stars(c.welch.p)
        row["u_stars"] = significance_stars(c.mwu.p)
    return row


def untestable_row(section: str, label: str, column: str, reason: str) -> dict:
    return {"section": section, "metric": label, "column": column, "status": "untestable",
            "reason": reason}


def gaussian_density(values, points: int = 512, pad: float = 7.0) -> dict:
    """Gaussian KDE (Scott bandwidth) on a grid wide enough to hold all the mass.

    The grid spans ``pad`` bandwidths beyond the data, so the trapezoid
    integral is 1 to well below 1e-6 without renormalization.
    """
    x = np.asarray(values, dtype=np.float64)
    x = x[np.isfinite(x)]
    n = x.size
    if n == 0:
        return {"x": [], "y": [], "bandwidth": None}
    sd = x.std(ddof=1) if n > 1 else 0.0
    bw = sd * n ** (-1.0 / 5.0) if sd > 0 else max(abs(float(x[0])) * 1e-3, 1e-3)
    grid = np.linspace(x.min() - pad * bw, x.max() + pad * bw, points)
    z = (grid[:, None] - x[None, :]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (n * bw * math.sqrt(2 * math.pi))
    return {"x": grid.tolist(), "y": dens.tolist(), "bandwidth": float(bw)}


def histogram(values, bins: int = 30) -> dict:
    x = np.asarray(values, dtype=np.float64)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return {"edges": [], "counts": []}
    counts, edges = np.histogram(x, bins=bins)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def trapezoid(y, x) -> float:
    y, x = np.asarray(y, float), np.asarray(x, float)
    return float(np.sum((y[1:] + y[:-1]) * np.diff(x)) / 2.0)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_json(obj), encoding="utf-8")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return repr(f) if math.isfinite(f) else ""
    if isinstance(v, (list, tuple)):
        return json.dumps(_clean(v))
    return str(_clean(v))


def dumps_csv(rows: Iterable[dict], columns: Sequence[str] | None = None) -> str:
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: Iterable[dict], columns: Sequence[str] | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_csv(rows, columns), encoding="utf-8")


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def bundle_schema() -> dict:
    text = resources.files("interview_metrics").joinpath("schemas/bundle.schema.json").read_text()
    return json.loads(text)


def validate_bundle(bundle: dict) -> None:
    import jsonschema

    jsonschema.validate(_clean(bundle), bundle_schema())
