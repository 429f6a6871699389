"""Pipeline stages behind the command-line interface.

Each stage reads the persisted output of the previous one from the output
directory and writes only into its own subdirectory::

    ingest/   transcripts.jsonl, ingest_report.json
    metrics/  metrics.csv, metrics_meta.json, entropy_report.{csv,json}, ...
    compare/  table1.{csv,json}, table2.{csv,json}
    psm/      table3.{csv,json}, balance.csv, covariates.csv, causal_run.json
    report/   bundle.json, plot_data.json
"""

from __future__ import annotations

import copy
import json
import logging
import math
import re
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from . import causal, corpus, lexical, report, semantic, stats
from .corpus import CorpusFilter, InputFormat, IngestReport, Role, Source

logger = logging.getLogger(__name__)

DEFAULT_CONFIG: dict[str, Any] = {
    "output_dir": "ivmetrics-out",
    "seed": 0,
    "workers": 1,
    "corpus": {
        "inputs": [],
        "filter": {"min_chars": 3000, "language": "*", "min_chars_sources": ["AI", "Human"]},
        "extra_delimiters": "",
    },
    "tokenizer": {"path": None, "name": "", "add_special_tokens": False},
    "lexical": {"pooled_per_scope": True},
    "embeddings": {"providers": [], "topic_model": None, "skip_semantic": False},
    "stats": {"bootstrap_replicates": 10000, "ci_method": "bootstrap", "stars": False},
    "psm": {
        "bandwidth": 0.1,
        "caliper_sd": 0.2,
        "ridge": 1e-6,
        "plotting_position": "hazen",
        "propensity_features": "transformed",
        "ate_covariates": "base",
        "share_range": [0.05, 0.50],
    },
}


class PipelineError(RuntimeError):
    pass


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


@dataclass
class RunConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        raw: dict = {}
        base = Path.cwd()
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
            if not isinstance(raw, dict):
                raise PipelineError(f"{path}: config must be a mapping")
            base = Path(path).resolve().parent
        data = deep_merge(DEFAULT_CONFIG, raw)
        data = deep_merge(data, overrides or {})
        return cls(data, base)

    def path(self, value) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out(self) -> Path:
        return self.path(self.data["output_dir"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def workers(self) -> int:
        return max(1, int(self.data.get("workers", 1)))

    def stage_dir(self, stage: str) -> Path:
        d = self.out / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def tokenizer_spec(self) -> lexical.TokenizerSpec:
        tc = self.data["tokenizer"]
        if not tc.get("path"):
            raise PipelineError("tokenizer.path is not configured")
        return lexical.TokenizerSpec(str(self.path(tc["path"])), tc.get("name", ""),
                                     bool(tc.get("add_special_tokens", False)))

    def providers(self) -> list[tuple[semantic.EmbeddingProviderSpec, Path | None]]:
        out = []
        for p in self.data["embeddings"]["providers"]:
            p = dict(p)
            cache = p.pop("cache", None)
            if p.get("path"):
                p["path"] = str(self.path(p["path"]))
            spec = semantic.EmbeddingProviderSpec(**p)
            if spec.kind is semantic.ProviderKind.REMOTE:
                cache = self.path(cache) if cache else self.out / "cache" / f"{_safe(spec.model_name)}.emb"
            out.append((spec, cache))
        return out

    def write_resolved(self, stage_dir: Path) -> None:
        (stage_dir / "resolved_config.yaml").write_text(
            yaml.safe_dump(self.data, sort_keys=True, allow_unicode=True), encoding="utf-8")


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


@dataclass
class StageResult:
    stage: str
    outputs: list[str]
    diagnostics: list[dict]
    summary: dict

    @property
    def ok(self) -> bool:
        return not any(d["level"] == "error" for d in self.diagnostics)


# ---------------------------------------------------------------- ingest

def _input_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix in (".jsonl", ".json") and p.is_file())
    if path.is_file():
        return [path]
    raise PipelineError(f"input not found: {path}")


def run_ingest(cfg: RunConfig) -> StageResult:
    inputs = cfg.data["corpus"]["inputs"]
    if not inputs:
        raise PipelineError("no transcripts: corpus.inputs is empty")
    rep = IngestReport()
    transcripts: list[corpus.Transcript] = []
    seen: set[str] = set()
    for spec in inputs:
        fmt = InputFormat(spec.get("format", "canonical"))
        role_map = corpus.RoleMap.load(cfg.path(spec["role_map"])) if spec.get("role_map") else None
        want = corpus.parse_source(spec["source"]) if spec.get("source") else None
        for f in _input_files(cfg.path(spec["path"])):
            parsed = corpus.parse_transcripts(
                f, fmt, report=rep, role_map=role_map, source=want or Source.HUMAN,
                language=spec.get("language", "en"))
            for t in parsed:
                if want is not None and t.source != want:
                    rep.add("error", f"record source {t.source.value} differs from configured "
                            f"{want.value}", path=str(f), record_id=t.id)
                    continue
                if t.id in seen:
                    rep.add("error", f"duplicate transcript id {t.id!r} across inputs",
                            path=str(f), record_id=t.id)
                    continue
                seen.add(t.id)
                transcripts.append(t)
    if not transcripts:
        raise PipelineError("no transcripts")
    fc = cfg.data["corpus"]["filter"]
    flt = CorpusFilter(int(fc["min_chars"]), str(fc.get("language", "*")),
                       min_chars_sources=frozenset(corpus.parse_source(s)
                                                   for s in fc.get("min_chars_sources", ["AI", "Human"])))
    kept = corpus.filter_corpus(transcripts, flt)
    counts = {
        "input": {s.value: sum(t.source == s for t in transcripts) for s in Source},
        "retained": {s.value: sum(t.source == s for t in kept) for s in Source},
    }
    if not kept:
        rep.add("error", "no transcripts left after filtering")
    d = cfg.stage_dir("ingest")
    corpus.write_transcripts(d / "transcripts.jsonl", kept)
    report.write_json(d / "ingest_report.json", {**rep.to_dict(), "per_source": counts,
                                                 "seed": cfg.seed})
    cfg.write_resolved(d)
    return StageResult("ingest", [str(d / "transcripts.jsonl"), str(d / "ingest_report.json")],
                       [x.to_dict() for x in rep.diagnostics], counts)


def load_ingested(cfg: RunConfig) -> list[corpus.Transcript]:
    path = cfg.out / "ingest" / "transcripts.jsonl"
    if not path.is_file():
        raise PipelineError("missing upstream stage 'ingest' (no ingest/transcripts.jsonl)")
    return corpus.parse_transcripts(path, InputFormat.CANONICAL)


# ---------------------------------------------------------------- metrics

def _pmap(fn, items, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def metric_columns(models: list[str]) -> list[str]:
    cols = ["transcript_id", "source", "language", "char_count", "n_turns", "total_tokens",
            "total_sentences", "n_sentences_interviewer", "n_sentences_interviewee", "digit_ratio"]
    cols += [c for c, _ in report.ENTROPY_METRICS]
    cols += [c for c, _ in report.LENGTH_METRICS]
    for model in (models + [semantic.CROSS_MODEL] if models else []):
        cols += [report.sim_column(f, model) for f in semantic.SIMILARITY_FIELDS]
        cols.append(report.sim_column("sim_average", model))
    return cols


def run_metrics(cfg: RunConfig, skip_semantic: bool | None = None) -> StageResult:
    transcripts = load_ingested(cfg)
    if skip_semantic is None:
        skip_semantic = bool(cfg.data["embeddings"].get("skip_semantic", False))
    spec = cfg.tokenizer_spec()
    lexical.load_tokenizer(spec)
    workers = cfg.workers
    delims = cfg.data["corpus"].get("extra_delimiters", "")
    diags: list[dict] = []

    sentences = _pmap(lambda t: corpus.segment_sentences(t, delims), transcripts, workers)
    sent_by_id = {t.id: s for t, s in zip(transcripts, sentences)}
    for t, sents in zip(transcripts, sentences):
        for r in Role:
            if not any(s.role == r for s in sents):
                diags.append({"level": "warning", "message": f"{t.id}: no {r.value} sentences"})

    seqs = _pmap(lambda t: lexical.transcript_token_sequences(t, spec), transcripts, workers)
    ent = lexical.entropy_report(transcripts, sequences=seqs,
                                 pooled_per_scope=bool(cfg.data["lexical"]["pooled_per_scope"]))
    diags += [{"level": "warning", "message": w} for w in ent.warnings]
    lengths = lexical.sentence_length_stats(transcripts, spec, sent_by_id)

    models: list[str] = []
    sims: dict[str, list[semantic.SimilarityReport]] = {}
    topic_vectors: dict[str, np.ndarray] = {}
    if not skip_semantic:
        providers = cfg.providers()
        if not providers:
            raise PipelineError("no embedding providers configured (use --skip-semantic to omit similarity)")
        all_sents = [s for ss in sentences for s in ss]
        offsets = np.cumsum([0] + [len(ss) for ss in sentences])
        topic_model = cfg.data["embeddings"].get("topic_model") or providers[0][0].model_name
        for prov, cache in providers:
            try:
                embs = semantic.embed_sentences(all_sents, prov, cache)
            except semantic.EmbeddingError as exc:
                raise PipelineError(f"embeddings for {prov.model_name}: {exc}") from None
            models.append(prov.model_name)
            per_t = [embs[offsets[i]:offsets[i + 1]] for i in range(len(transcripts))]
            sims[prov.model_name] = _pmap(
                lambda it: semantic.transcript_similarity(it[0].id, prov.model_name, it[1]),
                list(zip(transcripts, per_t)), workers)
            if prov.model_name == topic_model:
                for t, e in zip(transcripts, per_t):
                    v = semantic.mean_embedding(e)
                    if v is not None:
                        topic_vectors[t.id] = v
        if topic_model not in models:
            raise PipelineError(f"topic_model {topic_model!r} is not a configured provider")

    ent_by = {(r.transcript_id, r.scope): r.entropy_bits for r in ent.rows}
    rows = []
    for i, t in enumerate(transcripts):
        sents = sentences[i]
        row = {
            "transcript_id": t.id, "source": t.source.value, "language": t.language,
            "char_count": t.char_count, "n_turns": len(t.turns),
            "total_tokens": len(seqs[i][lexical.Scope.OVERALL]),
            "total_sentences": len(sents),
            "n_sentences_interviewer": sum(s.role == Role.INTERVIEWER for s in sents),
            "n_sentences_interviewee": sum(s.role == Role.INTERVIEWEE for s in sents),
            "digit_ratio": causal.digit_ratio(t),
        }
        for scope in lexical.Scope:
            row[f"entropy_{scope.value}"] = ent_by.get((t.id, scope))
        for role in ("overall", "interviewer", "interviewee"):
            row[f"tokens_per_sentence_{role}"] = lengths.stats(t.id, role)["mean"]
        if models:
            per_model = [sims[m][i] for m in models]
            for r in per_model + [semantic.cross_model_average(per_model)]:
                for f in semantic.SIMILARITY_FIELDS:
                    row[report.sim_column(f, r.model)] = getattr(r, f)
                row[report.sim_column("sim_average", r.model)] = r.average()
        rows.append(row)

    d = cfg.stage_dir("metrics")
    columns = metric_columns(models)
    report.write_csv(d / "metrics.csv", rows, columns)
    report.write_csv(d / "entropy_report.csv", [r.to_dict() for r in ent.rows])
    report.write_json(d / "entropy_report.json", ent.to_dict())
    report.write_json(d / "sentence_lengths.json", lengths.to_dict())
    report.write_json(d / "segmentation_report.json",
                      corpus.segmentation_report(transcripts, delims))
    outputs = [str(d / "metrics.csv")]
    if models:
        sim_rows = []
        for i in range(len(transcripts)):
            per_model = [sims[m][i] for m in models]
            sim_rows += [r.to_dict() for r in per_model + [semantic.cross_model_average(per_model)]]
        report.write_csv(d / "similarity_report.csv", sim_rows)
        report.write_json(d / "similarity_report.json", sim_rows)
        ids = [t.id for t in transcripts if t.id in topic_vectors]
        np.save(d / "topic_vectors.npy", np.stack([topic_vectors[i] for i in ids]) if ids
                else np.zeros((0, 0)))
        report.write_json(d / "topic_ids.json", ids)
    meta = {
        "schema_version": report.METRICS_SCHEMA_VERSION,
        "columns": columns,
        "models": models,
        "skip_semantic": skip_semantic,
        "l_min": {s.value: v for s, v in ent.l_min.items()},
        "tokenizer": {"name": spec.name, "add_special_tokens": spec.add_special_tokens},
        "n_transcripts": len(transcripts),
        "seed": cfg.seed,
    }
    report.write_json(d / "metrics_meta.json", meta)
    cfg.write_resolved(d)
    return StageResult("metrics", outputs, diags, meta)


def load_metrics(cfg: RunConfig) -> tuple[list[dict], dict]:
    d = cfg.out / "metrics"
    if not (d / "metrics.csv").is_file() or not (d / "metrics_meta.json").is_file():
        raise PipelineError("missing upstream stage 'metrics' (no metrics/metrics.csv)")
    meta = json.loads((d / "metrics_meta.json").read_text(encoding="utf-8"))
    rows = report.read_csv(d / "metrics.csv")
    return rows, meta


def _values(rows: list[dict], column: str, source: str) -> np.ndarray:
    vals = [float(r[column]) for r in rows if r["source"] == source and r.get(column, "") != ""]
    return np.asarray(vals, dtype=np.float64)


# ---------------------------------------------------------------- compare

def run_compare(cfg: RunConfig) -> StageResult:
    rows, meta = load_metrics(cfg)
    st = cfg.data["stats"]
    stars = bool(st.get("stars", False))
    t1, t2, diags = [], [], []
    for item in report.metric_catalog(meta["models"]):
        col, sec, lbl = item["column"], item["section"], item["label"]
        if col not in meta["columns"]:
            continue
        ai, hu = _values(rows, col, "AI"), _values(rows, col, "Human")
        if ai.size and hu.size:
            da, dh = stats.describe(ai), stats.describe(hu)
            diff, impr = stats.diff_and_improvement(da["mean"], dh["mean"])
            t1.append({"section": sec, "metric": lbl, "column": col,
                       "ai_mean": da["mean"], "ai_sd": da["sd"], "human_mean": dh["mean"],
                       "human_sd": dh["sd"], "diff": diff, "impr_pct": impr,
                       "n_ai": da["n"], "n_human": dh["n"],
                       "ai_median": da["median"], "human_median": dh["median"],
                       "ai_min": da["min"], "ai_max": da["max"],
                       "human_min": dh["min"], "human_max": dh["max"]})
        try:
            seed = [cfg.seed, zlib.crc32(col.encode())]
            c = stats.compare_groups(col, ai, hu, n_boot=int(st["bootstrap_replicates"]),
                                     seed=seed, ci_method=st.get("ci_method", "bootstrap"))
            t2.append(report.table2_row(sec, lbl, c, stars))
        except stats.StatsError as exc:
            t2.append(report.untestable_row(sec, lbl, col, str(exc)))
            diags.append({"level": "warning", "message": f"{col}: untestable ({exc})"})
    d = cfg.stage_dir("compare")
    report.write_csv(d / "table1.csv", t1)
    report.write_json(d / "table1.json", {"rows": t1, "seed": cfg.seed})
    report.write_csv(d / "table2.csv", t2)
    report.write_json(d / "table2.json", {"rows": t2, "seed": cfg.seed,
                                          "bootstrap_replicates": int(st["bootstrap_replicates"]),
                                          "ci_method": st.get("ci_method", "bootstrap")})
    cfg.write_resolved(d)
    summary = {"n_rows": len(t2), "n_testable": sum(r["status"] == "ok" for r in t2)}
    return StageResult("compare", [str(d / "table1.csv"), str(d / "table2.csv")], diags, summary)


# ---------------------------------------------------------------- psm

PSM_OUTCOMES = (
    ("entropy_overall", "Overall Transcript Entropy"),
    ("entropy_interviewee", "Interviewee Response Entropy"),
    ("entropy_interviewer", "Interviewer Text Entropy"),
    ("tokens_per_sentence_overall", "Mean Sentence Length"),
)


def run_psm(cfg: RunConfig) -> StageResult:
    rows, meta = load_metrics(cfg)
    transcripts = load_ingested(cfg)
    d_metrics = cfg.out / "metrics"
    if not (d_metrics / "topic_vectors.npy").is_file():
        raise PipelineError("psm needs topic vectors; rerun 'metrics' without --skip-semantic")
    ids = json.loads((d_metrics / "topic_ids.json").read_text(encoding="utf-8"))
    vecs = np.load(d_metrics / "topic_vectors.npy")
    topic = {i: vecs[k] for k, i in enumerate(ids)}
    by_id = {r["transcript_id"]: r for r in rows}
    transcripts = [t for t in transcripts if t.id in by_id]
    tokens = {i: int(r["total_tokens"]) for i, r in by_id.items()}
    sents = {i: int(r["total_sentences"]) for i, r in by_id.items()}
    pc = cfg.data["psm"]
    diags: list[dict] = []

    base = causal.build_covariates(transcripts, tokens, sents, topic)
    diags += [{"level": "warning", "message": f} for f in base.flags]
    share = causal.treatment_share(base.treatment)
    lo, hi = pc.get("share_range", [0.05, 0.5])
    share_ok = lo <= share <= hi
    if not share_ok:
        diags.append({"level": "warning",
                      "message": f"treatment share {share:.3f} outside [{lo}, {hi}]"})
    full = causal.transform_covariates(base, pc.get("plotting_position", "hazen"))
    features = full.columns if pc.get("propensity_features", "transformed") == "transformed" \
        else full.base_columns
    try:
        pm = causal.fit_propensity(full, features, ridge=float(pc["ridge"]))
        match = causal.kernel_match(pm.scores, full.treatment, full.ids,
                                    bandwidth=float(pc["bandwidth"]),
                                    caliper_sd=float(pc["caliper_sd"]))
    except causal.CausalError as exc:
        raise PipelineError(f"propensity matching failed: {exc}") from None
    for u in match.dropped:
        diags.append({"level": "warning", "message": f"treated unit {u} dropped (outside caliper)"})
    ate_m = full if pc.get("ate_covariates", "base") == "transformed" else base
    ate_cols = ate_m.base_columns if ate_m is base else ate_m.columns

    def outcome(col):
        return np.array([float(by_id[i][col]) if by_id[i].get(col, "") != "" else np.nan
                         for i in base.ids])

    table3 = []
    outcomes = list(PSM_OUTCOMES)
    models = meta["models"]
    if models:
        outcomes.append((report.sim_column("sim_average", models[0]),
                         f"Average Semantic Similarity ({models[0]})"))
    for m in models[1:]:
        outcomes.append((report.sim_column("sim_average", m), f"Alternative Model Similarity ({m})"))
    for col, label in outcomes:
        try:
            est = causal.estimate_ate(outcome(col), ate_m, match, label, covariates=ate_cols)
            table3.append({"group": "outcome", "column": col, **est.to_dict()})
        except causal.CausalError as exc:
            diags.append({"level": "error", "message": f"ATE for {col}: {exc}"})
    # a placebo outcome that is itself a covariate must leave the regression
    placebos = (("digit_ratio", "Placebo: Digit Ratio"),
                ("total_sentences", "Placebo: Sentence Count"))
    for col, label in placebos:
        try:
            est = causal.placebo_test(outcome(col), ate_m, match, label, covariates=ate_cols,
                                      exclude=[c for c in ate_cols if col in c])
            table3.append({"group": "placebo", "column": col, **est.to_dict()})
        except causal.CausalError as exc:
            diags.append({"level": "error", "message": f"placebo {col}: {exc}"})

    balance = [r.to_dict() for r in causal.smd_balance(base, match)]
    d = cfg.stage_dir("psm")
    t3_cols = ["group", "outcome", "column", "ATE", "SE", "t", "p", "ci_95", "significance",
               "placebo_pass", "n_used"]
    report.write_csv(d / "table3.csv", table3, t3_cols)
    report.write_json(d / "table3.json", {"rows": table3, "seed": cfg.seed})
    report.write_csv(d / "balance.csv", balance)
    (d / "covariates.csv").write_text(full.to_csv(), encoding="utf-8")
    run = {
        "seed": cfg.seed,
        "n_units": len(base),
        "n_treated": int(base.treatment.sum()),
        "n_control": int((1 - base.treatment).sum()),
        "treatment_share": share,
        "treatment_share_in_range": share_ok,
        "share_range": [lo, hi],
        "propensity": pm.to_dict(),
        "match": match.summary(),
        "score_histogram": causal.score_histogram(pm.scores, base.treatment),
        "balance": balance,
        "table3": table3,
        "covariate_flags": full.flags,
        "ate_covariates": list(ate_cols),
    }
    report.write_json(d / "causal_run.json", run)
    cfg.write_resolved(d)
    return StageResult("psm", [str(d / "table3.csv"), str(d / "causal_run.json")], diags,
                       {"treatment_share": share, "n_rows": len(table3)})


# ---------------------------------------------------------------- report

def _read_stage_json(cfg: RunConfig, stage: str, name: str) -> dict:
    p = cfg.out / stage / name
    if not p.is_file():
        raise PipelineError(f"missing upstream stage {stage!r} (no {stage}/{name})")
    return json.loads(p.read_text(encoding="utf-8"))


def run_report(cfg: RunConfig) -> StageResult:
    rows, meta = load_metrics(cfg)
    t1 = _read_stage_json(cfg, "compare", "table1.json")
    t2 = _read_stage_json(cfg, "compare", "table2.json")
    causal_run = _read_stage_json(cfg, "psm", "causal_run.json")
    import scipy

    bundle = {
        "schema_version": report.BUNDLE_SCHEMA_VERSION,
        "table1": t1["rows"],
        "table2": t2["rows"],
        "table3": causal_run["table3"],
        "balance": causal_run["balance"],
        "metadata": {
            "package_version": __version__,
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "seeds": {"run": cfg.seed, "bootstrap": t2["seed"], "psm": causal_run["seed"]},
            "bootstrap_replicates": t2["bootstrap_replicates"],
            "ci_method": t2["ci_method"],
            "l_min": meta["l_min"],
            "models": meta["models"],
            "n_transcripts": meta["n_transcripts"],
            "treatment_share": causal_run["treatment_share"],
            "dropped_units": causal_run["match"]["dropped_units"],
            "propensity": {k: causal_run["propensity"][k]
                           for k in ("converged", "iterations", "ridge", "clip")},
            "caliper": causal_run["match"]["caliper"],
            "bandwidth": causal_run["match"]["bandwidth"],
        },
    }
    report.validate_bundle(bundle)
    plot = {}
    for item in report.metric_catalog(meta["models"]):
        col = item["column"]
        if col not in meta["columns"]:
            continue
        plot[col] = {}
        for src in ("AI", "Human"):
            v = _values(rows, col, src)
            plot[col][src] = {"histogram": report.histogram(v), "density": report.gaussian_density(v)}
    plot["propensity_scores"] = causal_run["score_histogram"]
    d = cfg.stage_dir("report")
    report.write_json(d / "bundle.json", bundle)
    report.write_json(d / "plot_data.json", plot)
    cfg.write_resolved(d)
    return StageResult("report", [str(d / "bundle.json"), str(d / "plot_data.json")], [],
                       {"n_table2_rows": len(bundle["table2"])})
