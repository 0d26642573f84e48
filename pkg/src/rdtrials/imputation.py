"""Competing imputation methods and a multiple-imputation engine.

Three draw models fill lost-to-follow-up endpoints: return-to-baseline
(response reverts to baseline), washout (response drawn from the placebo
endpoint distribution), and retrieved-dropout (response drawn from a model
fitted to retrieved dropouts only). Completed datasets are analyzed with a
plain ANCOVA and the M results pooled with Rubin's rules. Completers'
endpoints are never touched; washout additionally discards and re-draws the
retrieved dropouts' endpoints, which it regards as contaminated.
"""

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .data import TrialDataset, compute_endpoint, invert_endpoint
from .errors import InsufficientDonorsError
from .joint import TREATMENT_POLICY, EffectEstimate
from .numerics import RngStream, least_squares_fit

__all__ = [
    "ImputationMethod",
    "PooledEstimate",
    "impute_once",
    "rubin_pool",
    "mi_analyze",
    "METHOD_KINDS",
]

METHOD_KINDS = ("return_to_baseline", "washout", "retrieved_dropout")


@dataclass(frozen=True)
class ImputationMethod:
    """Which draw model to use; rd_mean_mode only matters for retrieved_dropout.

    "covariate_conditional" centers retrieved-dropout draws on the fitted
    ANCOVA prediction at the subject's covariates; "arm_average" centers them
    on the raw endpoint mean of retrieved dropouts in the subject's arm.
    """

    kind: str
    rd_mean_mode: str = "covariate_conditional"

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown imputation kind {self.kind!r}")
        if self.rd_mean_mode not in ("covariate_conditional", "arm_average"):
            raise ValueError(f"unknown rd_mean_mode {self.rd_mean_mode!r}")


@dataclass(frozen=True)
class PooledEstimate:
    """Rubin's-rule combination of M point estimates and their variances."""

    q_bar: float
    within_var: float
    between_var: float
    total_var: float
    M: int
    df: float
    ci_low: float
    ci_high: float
    ci_level: float = 0.95


def _ancova_design(dataset: TrialDataset, rows, with_arm: bool) -> np.ndarray:
    cols = [np.ones_like(dataset.y0[rows]), dataset.y0[rows]]
    if with_arm:
        cols.append(dataset.x[rows].astype(float))
    for j in range(len(dataset.covariate_names)):
        cols.append(dataset.extra[rows, j])
    return np.column_stack(cols)


def _residual_sd(dataset: TrialDataset, rows, with_arm: bool, what: str) -> float:
    design = _ancova_design(dataset, rows, with_arm)
    n_rows = design.shape[0]
    if n_rows <= design.shape[1]:
        raise InsufficientDonorsError(
            f"{what}: needs more than {design.shape[1]} donors to estimate a draw SD, "
            f"got {n_rows}"
        )
    fit = least_squares_fit(design, dataset.endpoints[rows])
    if fit.df_residual < 1 or not np.isfinite(fit.sigma2_hat):
        raise InsufficientDonorsError(f"{what}: no residual degrees of freedom for the draw SD")
    return math.sqrt(fit.sigma2_hat)


def _imputation_moments(dataset: TrialDataset, method: ImputationMethod, targets: np.ndarray):
    """Per-subject draw means and the common draw SD for the rows to fill."""
    observed = dataset.q == 1
    spec = dataset.endpoint_spec

    if method.kind == "return_to_baseline":
        sd = _residual_sd(dataset, observed, with_arm=True, what="return-to-baseline")
        means = np.array(
            [compute_endpoint(dataset.y0[i], dataset.y0[i], spec) for i in targets]
        )
        return means, sd

    if method.kind == "washout":
        placebo_completer = (dataset.x == 0) & (dataset.d == 1)
        if int(placebo_completer.sum()) < 2:
            raise InsufficientDonorsError("washout: needs at least 2 placebo completers")
        sd = _residual_sd(dataset, placebo_completer, with_arm=False, what="washout")
        means = np.full(len(targets), float(np.mean(dataset.endpoints[placebo_completer])))
        return means, sd

    rd_rows = (dataset.d == 0) & (dataset.q == 1)
    n_rd = int(rd_rows.sum())
    if n_rd == 0:
        raise InsufficientDonorsError("retrieved-dropout: no retrieved dropouts to learn from")
    design = _ancova_design(dataset, rd_rows, with_arm=True)
    fit = least_squares_fit(design, dataset.endpoints[rd_rows])
    # with very few donors the draw model degenerates (min-norm fit, zero SD)
    # rather than failing, so that low-retrieval studies still run end to end
    sd = math.sqrt(fit.sigma2_hat) if fit.df_residual >= 1 else 0.0
    if method.rd_mean_mode == "covariate_conditional":
        means = _ancova_design(dataset, targets, with_arm=True) @ fit.coefficients
    else:
        means = np.empty(len(targets))
        for k, i in enumerate(targets):
            arm_rd = rd_rows & (dataset.x == dataset.x[i])
            if not arm_rd.any():
                raise InsufficientDonorsError(
                    f"retrieved-dropout (arm_average): no retrieved dropouts in arm "
                    f"{int(dataset.x[i])}"
                )
            means[k] = float(np.mean(dataset.endpoints[arm_rd]))
    return means, sd


def impute_once(
    dataset: TrialDataset, method: ImputationMethod, rng: RngStream
) -> TrialDataset:
    """Fill missing endpoints with one draw from the method's model.

    Return-to-baseline and retrieved-dropout imputation fill lost-to-follow-up
    endpoints only. Washout regards every post-discontinuation observation as
    contaminated, so it overwrites retrieved dropouts' endpoints as well.
    Completers are never touched; a dataset with nothing to fill is returned
    as-is.
    """
    if method.kind == "washout":
        targets = np.flatnonzero(dataset.d == 0)
    else:
        targets = np.flatnonzero((dataset.d == 0) & (dataset.q == 0))
    if targets.size == 0:
        return dataset

    means, sd = _imputation_moments(dataset, method, targets)
    draws = means + sd * rng.generator().standard_normal(targets.size)

    subjects = list(dataset.subjects)
    spec = dataset.endpoint_spec
    for k, i in enumerate(targets):
        rec = subjects[i]
        subjects[i] = replace(
            rec, q=1, y_t=float(invert_endpoint(draws[k], rec.y0, spec))
        )
    return dataset.replace_subjects(subjects)


def rubin_pool(estimates, variances, ci_level: float = 0.95) -> PooledEstimate:
    """Combine per-imputation estimates and squared SEs with Rubin's rules."""
    q = np.asarray(estimates, dtype=float)
    w = np.asarray(variances, dtype=float)
    if q.shape != w.shape or q.ndim != 1:
        raise ValueError("estimates and variances must be equal-length vectors")
    m = q.size
    if m < 2:
        raise ValueError("Rubin pooling needs at least 2 imputations")
    if np.any(w <= 0):
        raise ValueError("variances must be positive")

    q_bar = float(np.mean(q))
    w_bar = float(np.mean(w))
    b_m = float(np.var(q, ddof=1))
    total = w_bar + (1.0 + 1.0 / m) * b_m
    if b_m == 0.0:
        df = float("inf")
        quant = float(stats.norm.ppf(0.5 + ci_level / 2.0))
    else:
        df = (m - 1) * (1.0 + w_bar / ((1.0 + 1.0 / m) * b_m)) ** 2
        quant = float(stats.t.ppf(0.5 + ci_level / 2.0, df))
    half = quant * math.sqrt(total)
    return PooledEstimate(
        q_bar=q_bar,
        within_var=w_bar,
        between_var=b_m,
        total_var=total,
        M=m,
        df=df,
        ci_low=q_bar - half,
        ci_high=q_bar + half,
        ci_level=ci_level,
    )


def mi_analyze(
    dataset: TrialDataset,
    method: ImputationMethod,
    M: int = 1000,
    seed: int = 0,
    ci_level: float = 0.95,
    trace_path: str | None = None,
) -> EffectEstimate:
    """Multiple imputation: M completed datasets, ANCOVA each, Rubin pooling.

    The analysis model regresses the endpoint on baseline and arm over all N
    subjects with dropout status ignored. Imputation m draws from the
    sub-stream keyed by m, so results are reproducible and independent of any
    parallel execution schedule.
    """
    if M < 2:
        raise ValueError("M must be at least 2")
    base = RngStream(seed)
    every = np.ones(dataset.n, dtype=bool)
    design = _ancova_design(dataset, every, with_arm=True)
    ls_op = np.linalg.pinv(design)
    rank = np.linalg.matrix_rank(design)
    df_resid = dataset.n - rank
    if df_resid < 1:
        raise ValueError("analysis ANCOVA has no residual degrees of freedom")
    arm_col = 2
    unscaled_arm = float((ls_op @ ls_op.T)[arm_col, arm_col])

    # The draw model depends only on the observed data, so compute its moments
    # once and fill the endpoint vector per imputation; draw-for-draw this
    # matches impute_once with sub-stream m.
    if method.kind == "washout":
        targets = np.flatnonzero(dataset.d == 0)
    else:
        targets = np.flatnonzero((dataset.d == 0) & (dataset.q == 0))
    if targets.size:
        means, sd = _imputation_moments(dataset, method, targets)

    z_all = np.tile(dataset.endpoints, (M, 1))  # (M, N)
    for m in range(M):
        if targets.size:
            draws = base.child(m).generator().standard_normal(targets.size)
            z_all[m, targets] = means + sd * draws
    coef = z_all @ ls_op.T  # (M, p)
    resid = z_all - coef @ design.T
    sigma2 = np.einsum("mn,mn->m", resid, resid) / df_resid
    estimates = coef[:, arm_col]
    variances = sigma2 * unscaled_arm

    if trace_path is not None:
        with open(trace_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m", "estimate", "variance"])
            for m in range(M):
                writer.writerow([m + 1, repr(estimates[m]), repr(variances[m])])

    pooled = rubin_pool(estimates, variances, ci_level=ci_level)
    se = math.sqrt(pooled.total_var)
    statistic = pooled.q_bar / se if se > 0 else 0.0
    if math.isinf(pooled.df):
        p = float(2.0 * stats.norm.sf(abs(statistic)))
    else:
        p = float(2.0 * stats.t.sf(abs(statistic), pooled.df))
    return EffectEstimate(
        estimate=pooled.q_bar,
        se=se,
        ci_low=pooled.ci_low,
        ci_high=pooled.ci_high,
        strategy=TREATMENT_POLICY,
        method=f"mi_{method.kind}",
        ci_level=ci_level,
        df=pooled.df,
        statistic=statistic,
        p_value=p,
    )
