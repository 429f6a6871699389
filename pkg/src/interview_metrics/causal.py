"""Propensity-score kernel matching and matched-sample treatment effects.

The pipeline is::

    build_covariates -> transform_covariates -> fit_propensity
        -> kernel_match -> estimate_ate / smd_balance / placebo_test
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special
from scipy import stats as sps

from .corpus import Source, Transcript

logger = logging.getLogger(__name__)

BASE_COLUMNS = ("total_tokens", "total_sentences", "PC1", "PC2", "PC3")
COUNT_COLUMNS = ("total_tokens", "total_sentences")


class CausalError(ValueError):
    pass


class SeparationError(CausalError):
    pass


@dataclass
class CovariateMatrix:
    ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray
    treatment: np.ndarray
    base_columns: tuple[str, ...] = BASE_COLUMNS
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.treatment = np.asarray(self.treatment, dtype=np.int64)
        n = len(self.ids)
        if self.values.shape != (n, len(self.columns)):
            raise CausalError(f"values shape {self.values.shape} does not match "
                              f"{n} ids x {len(self.columns)} columns")
        if self.treatment.shape != (n,):
            raise CausalError("treatment vector is not aligned with ids")
        if len(set(self.ids)) != n:
            raise CausalError("duplicate ids in covariate matrix")
        if not np.all(np.isfinite(self.values)):
            raise CausalError("covariate matrix has missing or non-finite cells")

    def __len__(self) -> int:
        return len(self.ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def select(self, names: Sequence[str]) -> np.ndarray:
        return self.values[:, [self.columns.index(c) for c in names]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "treatment", *self.columns])
        for i, row in enumerate(self.values):
            w.writerow([self.ids[i], int(self.treatment[i]), *(repr(float(v)) for v in row)])
        return buf.getvalue()


def topic_pca(vectors, n_components: int = 3) -> tuple[np.ndarray, dict]:
    """Project per-transcript topic vectors on their top principal components.

    Columns are centred, the covariance is eigendecomposed, and each
    component's sign is chosen so its largest-magnitude loading is positive.
    When the data have rank below ``n_components`` the missing columns are
    zero and listed under ``"padded"`` in the returned info.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise CausalError("topic vectors must form a 2-d array")
    n, dim = x.shape
    if n < 4:
        raise CausalError(f"topic PCA needs at least 4 transcripts, got {n}")
    if dim < n_components:
        raise CausalError(f"topic PCA needs dimension >= {n_components}, got {dim}")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = max(evals[0], 0.0) * max(n, dim) * np.finfo(float).eps
    rank = int(np.sum(evals > tol))
    k = min(n_components, rank)
    loadings = np.zeros((dim, n_components))
    for j in range(k):
        v = evecs[:, j]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        loadings[:, j] = v
    scores = xc @ loadings
    padded = [f"PC{j + 1}" for j in range(k, n_components)]
    info = {
        "explained_variance": [float(e) for e in evals[:n_components]],
        "explained_variance_ratio": [float(e / evals.sum()) if evals.sum() > 0 else 0.0
                                     for e in evals[:n_components]],
        "padded": padded,
        "loadings": loadings,
    }
    return scores, info


def build_covariates(transcripts: Sequence[Transcript], total_tokens: Mapping[str, int],
                     total_sentences: Mapping[str, int],
                     topic_vectors: Mapping[str, np.ndarray]) -> CovariateMatrix:
    """Base covariate matrix: lengths plus three topic components.

    Transcripts without a topic vector (no embeddings) are excluded and listed
    in ``flags``.
    """
    kept, flags = [], []
    for t in transcripts:
        vec = topic_vectors.get(t.id)
        if vec is None or t.id not in total_tokens or t.id not in total_sentences:
            flags.append(f"excluded {t.id}: missing embeddings or counts")
            continue
        kept.append(t)
    treatment = np.array([1 if t.source == Source.AI else 0 for t in kept], dtype=np.int64)
    if treatment.size == 0 or treatment.min() == treatment.max():
        raise CausalError("both treatment levels (AI and Human) are required")
    pcs, info = topic_pca(np.stack([np.asarray(topic_vectors[t.id], dtype=np.float64) for t in kept]))
    flags.extend(f"{c} padded with zeros (topic rank < 3)" for c in info["padded"])
    values = np.column_stack([
        [float(total_tokens[t.id]) for t in kept],
        [float(total_sentences[t.id]) for t in kept],
        pcs,
    ])
    return CovariateMatrix(tuple(t.id for t in kept), BASE_COLUMNS, values, treatment,
                           BASE_COLUMNS, flags)


PLOTTING_POSITIONS = {
    "hazen": lambda r, n: (r - 0.5) / n,
    "weibull": lambda r, n: r / (n + 1.0),
}


def quantile_normal_scores(x, plotting_position: str = "hazen") -> np.ndarray:
    """Rank-based standard normal scores; ties share mid-ranks.

    ``"hazen"`` uses (rank - 0.5) / n, ``"weibull"`` uses rank / (n + 1).
    """
    x = np.asarray(x, dtype=np.float64)
    try:
        pos = PLOTTING_POSITIONS[plotting_position]
    except KeyError:
        raise CausalError(f"unknown plotting position {plotting_position!r}") from None
    r = sps.rankdata(x, method="average")
    return special.ndtri(pos(r, x.size))


def transform_covariates(m: CovariateMatrix, plotting_position: str = "hazen") -> CovariateMatrix:
    """Append log, degree-2 polynomial and quantile-normal columns, then standardize.

    Polynomial terms are built from z-scored base columns; with an intercept and
    the base columns present this spans the same space as raw products but is
    far better conditioned. Every column (base included) ends with mean 0 and
    sd 1 unless it is constant, in which case it is left as is and flagged.
    """
    base = m.select(m.base_columns)
    names: list[str] = list(m.base_columns)
    cols: list[np.ndarray] = [base[:, j] for j in range(base.shape[1])]
    for c in COUNT_COLUMNS:
        if c in m.base_columns:
            x = m.column(c)
            if np.any(x <= -1):
                raise CausalError(f"log1p undefined for column {c}")
            names.append(f"log1p_{c}")
            cols.append(np.log1p(x))
    z = _zscore_matrix(base)
    k = len(m.base_columns)
    for i, j in itertools.combinations_with_replacement(range(k), 2):
        a, b = m.base_columns[i], m.base_columns[j]
        names.append(f"{a}^2" if i == j else f"{a}*{b}")
        cols.append(z[:, i] * z[:, j])
    for j, c in enumerate(m.base_columns):
        names.append(f"qn_{c}")
        cols.append(quantile_normal_scores(base[:, j], plotting_position))

    flags = list(m.flags)
    out = np.column_stack(cols)
    for j, name in enumerate(names):
        sd = out[:, j].std(ddof=1) if out.shape[0] > 1 else 0.0
        if not sd > 1e-12 * max(1.0, abs(out[:, j]).max()):
            flags.append(f"constant column {name}: standardization skipped")
            continue
        out[:, j] = (out[:, j] - out[:, j].mean()) / sd
    return CovariateMatrix(m.ids, tuple(names), out, m.treatment, m.base_columns, flags)


def _zscore_matrix(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return (x - mu) / sd


@dataclass
class LogisticFit:
    coef: np.ndarray
    se: np.ndarray
    scores: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float


def logistic_irls(x, y, *, ridge: float = 1e-6, tol: float = 1e-8, max_iter: int = 100,
                  clip: float = 1e-6, add_intercept: bool = True,
                  separation_bound: float = 1e3) -> LogisticFit:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    A ridge penalty of ``ridge`` on the non-intercept coefficients keeps the
    normal equations invertible. Iteration stops when the largest coefficient
    change drops below ``tol``. Coefficients growing past
    ``separation_bound`` indicate perfect separation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=np.float64)
    if add_intercept:
        x = np.column_stack([np.ones(x.shape[0]), x])
    n, p = x.shape
    if n <= p:
        raise CausalError(f"logistic fit needs more rows ({n}) than parameters ({p})")
    if y.min() == y.max():
        raise CausalError("logistic fit needs both outcome levels")
    penalty = np.full(p, ridge)
    if add_intercept:
        penalty[0] = 0.0
    beta = np.zeros(p)
    # start from the marginal log-odds, which is exact for an uninformative design
    if add_intercept:
        ybar = y.mean()
        beta[0] = math.log(ybar / (1 - ybar))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = x @ beta
        mu = special.expit(eta)
        w = np.maximum(mu * (1 - mu), 1e-12)
        h = x.T @ (x * w[:, None]) + np.diag(penalty)
        g = x.T @ (y - mu) - penalty * beta
        step = np.linalg.solve(h, g)
        beta = beta + step
        if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > separation_bound:
            raise SeparationError(
                "logistic coefficients diverge (perfect separation); increase the ridge "
                "penalty or reduce the covariate set")
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    mu = special.expit(x @ beta)
    if np.max(np.abs(y - mu)) < 1e-6:
        raise SeparationError(
            "logistic fit predicts every label exactly (perfect separation); increase the "
            "ridge penalty or reduce the covariate set")
    w = mu * (1 - mu)
    h = x.T @ (x * w[:, None]) + np.diag(penalty)
    cov = np.linalg.inv(h)
    ll = float(np.sum(y * np.log(np.clip(mu, 1e-300, None)) + (1 - y) * np.log(np.clip(1 - mu, 1e-300, None))))
    return LogisticFit(beta, np.sqrt(np.clip(np.diag(cov), 0, None)),
                       np.clip(mu, clip, 1 - clip), converged, it, ll)


@dataclass
class PropensityModel:
    columns: tuple[str, ...]
    coefficients: np.ndarray  # intercept first
    se: np.ndarray
    scores: np.ndarray
    converged: bool
    iterations: int
    ridge: float
    clip: float
    near_boundary: list[str]
    dropped_columns: list[str]

    def to_dict(self) -> dict:
        return {
            "columns": ["intercept", *self.columns],
            "coefficients": [float(c) for c in self.coefficients],
            "se": [float(s) for s in self.se],
            "converged": self.converged,
            "iterations": self.iterations,
            "ridge": self.ridge,
            "clip": self.clip,
            "near_boundary": self.near_boundary,
            "dropped_columns": self.dropped_columns,
        }


def fit_propensity(m: CovariateMatrix, columns: Sequence[str] | None = None, *,
                   ridge: float = 1e-6, tol: float = 1e-8, max_iter: int = 100,
                   clip: float = 1e-6, boundary: float = 0.01) -> PropensityModel:
    """Logistic propensity scores P(T=1 | X) on ``columns`` (default: all)."""
    cols = list(columns) if columns is not None else list(m.columns)
    x = m.select(cols)
    keep = [j for j in range(x.shape[1]) if np.ptp(x[:, j]) > 0]
    dropped = [cols[j] for j in range(len(cols)) if j not in keep]
    cols = [cols[j] for j in keep]
    fit = logistic_irls(x[:, keep], m.treatment, ridge=ridge, tol=tol, max_iter=max_iter, clip=clip)
    if not fit.converged:
        logger.warning("propensity model did not converge in %d iterations", fit.iterations)
    near = [m.ids[i] for i in np.flatnonzero((fit.scores < boundary) | (fit.scores > 1 - boundary))]
    return PropensityModel(tuple(cols), fit.coef, fit.se, fit.scores, fit.converged,
                           fit.iterations, ridge, clip, near, dropped)


def gaussian_kernel(d, bandwidth: float = 0.1):
    d = np.asarray(d, dtype=np.float64)
    return np.exp(-(d * d) / (2.0 * bandwidth * bandwidth))


@dataclass
class MatchResult:
    bandwidth: float
    caliper: float
    treated_index: np.ndarray  # row indices of retained treated units
    control_index: np.ndarray  # row indices of all control units
    weights: np.ndarray  # (retained treated, controls), rows sum to 1
    unit_weight: np.ndarray  # per row of the covariate matrix
    dropped: list[str]

    def summary(self) -> dict:
        used = self.unit_weight[self.control_index] > 0
        return {
            "bandwidth": self.bandwidth,
            "caliper": self.caliper,
            "n_treated_retained": int(self.treated_index.size),
            "n_treated_dropped": len(self.dropped),
            "n_controls": int(self.control_index.size),
            "n_controls_used": int(used.sum()),
            "dropped_units": list(self.dropped),
        }


def kernel_match(scores, treatment, ids: Sequence[str] | None = None, *,
                 bandwidth: float = 0.1, caliper_sd: float = 0.2) -> MatchResult:
    """Gaussian kernel matching of treated units to controls within a caliper.

    The caliper is ``caliper_sd`` times the sample SD of the scores on the raw
    probability scale. Each retained treated unit's control weights sum to 1;
    treated units with no control inside the caliper are dropped. Controls get
    the sum of their normalized weights, treated units weight 1.
    """
    ps = np.asarray(scores, dtype=np.float64)
    t = np.asarray(treatment).astype(bool)
    ids = list(ids) if ids is not None else [str(i) for i in range(ps.size)]
    sd = ps.std(ddof=1)
    if not sd > 0:
        raise CausalError("propensity scores have zero spread; caliper undefined")
    caliper = caliper_sd * sd
    ti, ci = np.flatnonzero(t), np.flatnonzero(~t)
    if ti.size == 0 or ci.size == 0:
        raise CausalError("kernel matching needs treated and control units")
    d = np.abs(ps[ti][:, None] - ps[ci][None, :])
    k = np.where(d <= caliper, gaussian_kernel(d, bandwidth), 0.0)
    tot = k.sum(axis=1)
    ok = tot > 0
    dropped = [ids[i] for i in ti[~ok]]
    if not ok.any():
        raise CausalError("no common support: every treated unit lacks a control within the "
                          f"caliper; dropped: {', '.join(dropped)}")
    w = k[ok] / tot[ok][:, None]
    unit = np.zeros(ps.size)
    unit[ti[ok]] = 1.0
    unit[ci] = w.sum(axis=0)
    return MatchResult(bandwidth, caliper, ti[ok], ci, w, unit, dropped)


@dataclass
class AteEstimate:
    outcome_name: str
    ate: float
    se: float
    t: float
    p: float
    ci_95: tuple[float, float]
    intercept: float
    gamma: dict[str, float]
    residual_variance: float
    n_used: int
    placebo: bool = False

    @property
    def significant(self) -> bool:
        return self.p < 0.05

    @property
    def placebo_pass(self) -> bool | None:
        return (self.p > 0.05) if self.placebo else None

    def table_row(self) -> dict:
        return {
            "outcome": self.outcome_name,
            "ATE": self.ate,
            "SE": self.se,
            "t": self.t,
            "p": self.p,
            "ci_95": list(self.ci_95),
            "significance": "Yes" if self.significant else "No",
            **({"placebo_pass": self.placebo_pass} if self.placebo else {}),
        }

    def to_dict(self) -> dict:
        return {**self.table_row(), "intercept": self.intercept, "gamma": dict(self.gamma),
                "residual_variance": self.residual_variance, "n_used": self.n_used}


def weighted_ols(y, x, w, names: Sequence[str]):
    """WLS coefficients with HC1 sandwich covariance. Returns (beta, cov, resid)."""
    keep = w > 0
    y, x, w = y[keep], x[keep], w[keep]
    n, p = x.shape
    if n <= p:
        raise CausalError(f"matched sample too small: {n} rows for {p} parameters")
    xw = x * w[:, None]
    xtwx = x.T @ xw
    rank = np.linalg.matrix_rank(x * np.sqrt(w)[:, None])
    if rank < p:
        raise CausalError("design matrix is rank deficient; collinear columns: "
                          + ", ".join(_collinear_columns(x, names)))
    bread = np.linalg.inv(xtwx)
    beta = bread @ (xw.T @ y)
    resid = y - x @ beta
    meat = x.T @ (x * ((w * resid) ** 2)[:, None])
    cov = bread @ meat @ bread * (n / (n - p))
    return beta, cov, resid, w


def _collinear_columns(x: np.ndarray, names: Sequence[str]) -> list[str]:
    bad, basis = [], []
    for j in range(x.shape[1]):
        trial = basis + [j]
        if np.linalg.matrix_rank(x[:, trial]) < len(trial):
            bad.append(names[j])
        else:
            basis = trial
    return bad


def estimate_ate(y, m: CovariateMatrix, match: MatchResult, outcome_name: str = "outcome", *,
                 covariates: Sequence[str] | None = None, exclude: Sequence[str] = (),
                 placebo: bool = False) -> AteEstimate:
    """Matched-sample weighted regression of Y on treatment and covariates.

    Treated units carry weight 1 and controls their summed kernel weight, so
    the treatment coefficient is a matched-sample (ATT-style) effect.
    Standard errors are heteroskedasticity-robust (HC1). Units with a NaN
    outcome are left out.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (len(m),):
        raise CausalError("outcome is not aligned with the covariate matrix")
    # units whose outcome is missing (NaN) leave the regression
    weight = np.where(np.isfinite(y), match.unit_weight, 0.0)
    if not np.any(weight[m.treatment == 1] > 0) or not np.any(weight[m.treatment == 0] > 0):
        raise CausalError(f"outcome {outcome_name!r}: no matched treated or control unit has a value")
    cols = [c for c in (covariates if covariates is not None else m.base_columns) if c not in exclude]
    names = ["intercept", "treatment", *cols]
    x = np.column_stack([np.ones(len(m)), m.treatment.astype(float), m.select(cols)]) if cols else \
        np.column_stack([np.ones(len(m)), m.treatment.astype(float)])
    yy = np.where(weight > 0, y, 0.0)
    beta, cov, resid, w = weighted_ols(yy, x, weight, names)
    se = float(math.sqrt(max(cov[1, 1], 0.0)))
    b = float(beta[1])
    if se > 0:
        t = b / se
    else:
        t = math.copysign(math.inf, b) if b != 0 else 0.0
    p = float(special.erfc(abs(t) / math.sqrt(2.0))) if math.isfinite(t) else 0.0
    if se == 0 and b == 0:
        p = 1.0
    rv = float(np.sum(w * resid ** 2) / max(np.sum(w), 1e-300))
    return AteEstimate(outcome_name, b, se, float(t), p, (b - 1.96 * se, b + 1.96 * se),
                       float(beta[0]), {c: float(v) for c, v in zip(cols, beta[2:])}, rv,
                       int(np.sum(weight > 0)), placebo)


def placebo_test(y, m: CovariateMatrix, match: MatchResult, outcome_name: str = "placebo",
                 **kwargs) -> AteEstimate:
    """Same estimator as :func:`estimate_ate`; passes when p > 0.05."""
    return estimate_ate(y, m, match, outcome_name, placebo=True, **kwargs)


def _weighted_mean_var(x: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    v1 = w.sum()
    mean = float(np.dot(w, x) / v1)
    v2 = float(np.dot(w, w))
    denom = v1 - v2 / v1
    var = float(np.dot(w, (x - mean) ** 2) / denom) if denom > 0 else 0.0
    return mean, var


def smd(x_t, x_c, w_t=None, w_c=None) -> float | None:
    x_t, x_c = np.asarray(x_t, float), np.asarray(x_c, float)
    w_t = np.ones(x_t.size) if w_t is None else np.asarray(w_t, float)
    w_c = np.ones(x_c.size) if w_c is None else np.asarray(w_c, float)
    mt, vt = _weighted_mean_var(x_t, w_t)
    mc, vc = _weighted_mean_var(x_c, w_c)
    s = math.sqrt((vt + vc) / 2.0)
    if s == 0:
        return 0.0 if mt == mc else None
    return (mt - mc) / s


@dataclass
class BalanceRow:
    covariate: str
    smd_pre: float | None
    smd_post: float | None
    pct_improvement: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def improvement_pct(smd_pre: float | None, smd_post: float | None) -> float | None:
    if smd_pre is None or smd_post is None or smd_pre == 0:
        return None
    return 100.0 * (1.0 - abs(smd_post) / abs(smd_pre))


def smd_balance(m: CovariateMatrix, match: MatchResult,
                columns: Sequence[str] | None = None) -> list[BalanceRow]:
    """SMD per covariate on raw groups and on the kernel-weighted matched sample."""
    cols = list(columns) if columns is not None else list(m.base_columns)
    t = m.treatment.astype(bool)
    w = match.unit_weight
    tm, cm = t & (w > 0), (~t) & (w > 0)
    rows = []
    for c in cols:
        x = m.column(c)
        pre = smd(x[t], x[~t])
        post = smd(x[tm], x[cm], w[tm], w[cm]) if tm.any() and cm.any() else None
        rows.append(BalanceRow(c, pre, post, improvement_pct(pre, post)))
    return rows


_WHITESPACE = re.compile(r"\s")
_DIGIT = re.compile(r"\d")


def digit_ratio(t: Transcript) -> float:
    text = "".join(turn.text for turn in t.turns)
    # str-pattern \s and \d are the Unicode isspace / isdecimal classes
    non_ws = len(text) - len(_WHITESPACE.findall(text))
    if non_ws == 0:
        raise CausalError(f"{t.id}: no non-whitespace characters")
    return len(_DIGIT.findall(text)) / non_ws


def treatment_share(treatment) -> float:
    t = np.asarray(treatment)
    return float(t.mean())


def score_histogram(scores, treatment, bins: int = 20) -> dict:
    ps = np.asarray(scores, dtype=float)
    t = np.asarray(treatment).astype(bool)
    edges = np.linspace(0.0, 1.0, bins + 1)
    return {
        "edges": [float(e) for e in edges],
        "treated": [int(c) for c in np.histogram(ps[t], edges)[0]],
        "control": [int(c) for c in np.histogram(ps[~t], edges)[0]],
    }
