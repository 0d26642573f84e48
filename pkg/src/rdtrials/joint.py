"""Joint maximum-likelihood model for endpoint, treatment discontinuation, and
retrieval, with treatment effects under the hypothetical and treatment-policy
strategies.

The observed log-likelihood separates into three independent pieces, so the
fit runs three small optimizations: least squares for the endpoint regression
(with a dropout-shift column), Newton-Raphson for the discontinuation probit,
and a closed-form count ratio for the retrieval probability. The
treatment-policy effect is a plug-in average of probit probability contrasts;
its standard error comes from a three-step parametric/residual bootstrap.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .data import TrialDataset
from .errors import ConvergenceError, EstimabilityError, SeparationError
from .numerics import (
    RngStream,
    least_squares_fit,
    norm_cdf,
    norm_logcdf,
    norm_logpdf,
)

__all__ = [
    "FitOptions",
    "JointModelFit",
    "EffectEstimate",
    "BootstrapResult",
    "observed_loglik",
    "loglik_components",
    "fit_probit",
    "fit_joint",
    "hypothetical_effect",
    "tp_effect_plugin",
    "tp_effect_closed_form",
    "bootstrap_tp",
]

HYPOTHETICAL = "hypothetical"
TREATMENT_POLICY = "treatment_policy"


@dataclass(frozen=True)
class FitOptions:
    """Knobs for fit_joint.

    baseline_slope_mode "fixed_unit" pins the probit baseline coefficient at 1
    (the baseline then enters as an offset); "free" estimates it. With
    standardize_baseline the probit baseline is centered and scaled by the
    whole-sample mean/sd, which are frozen into the fit for later reuse.
    """

    baseline_slope_mode: str = "fixed_unit"
    standardize_baseline: bool = True
    delta_mode: str = "common"
    probit_tol: float = 1e-8
    probit_max_iter: int = 50

    def __post_init__(self):
        if self.baseline_slope_mode not in ("fixed_unit", "free"):
            raise ValueError(f"unknown baseline_slope_mode {self.baseline_slope_mode!r}")
        if self.delta_mode not in ("common", "arm_specific"):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")
        if not self.probit_tol > 0:
            raise ValueError("probit_tol must be positive")
        if self.probit_max_iter < 1:
            raise ValueError("probit_max_iter must be at least 1")


@dataclass(frozen=True)
class EffectEstimate:
    """A treatment-effect point estimate with inference metadata."""

    estimate: float
    se: float
    ci_low: float
    ci_high: float
    strategy: str
    method: str
    ci_level: float = 0.95
    df: float | None = None
    statistic: float | None = None
    p_value: float | None = None
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "strategy": self.strategy,
            "method": self.method,
            "ci_level": self.ci_level,
            "df": self.df,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class BootstrapResult:
    """Replicate vector and derived basic-bootstrap inference."""

    B: int
    replicates: np.ndarray
    se: float
    ci_low: float
    ci_high: float
    seed: int
    n_retries: int = 0

    def to_dict(self) -> dict:
        return {
            "B": self.B,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "seed": self.seed,
            "n_retries": self.n_retries,
        }


@dataclass(frozen=True)
class JointModelFit:
    """All fitted parameters plus the design conventions needed to reuse them.

    gamma is reported in full design order (intercept, baseline, arm, extras)
    even in fixed_unit mode, where the baseline entry is exactly 1. The
    baseline entries refer to the transformed (standardized) scale whenever
    baseline_standardization is set.
    """

    beta: np.ndarray
    delta: float | None
    delta_x: float | None
    sigma2_eps: float
    gamma: np.ndarray | None
    pi_hat: float | None
    loglik: float
    regression_covariance: np.ndarray
    probit_covariance: np.ndarray | None
    baseline_standardization: tuple | None
    counts: tuple
    design_rank: int
    df_residual: int
    design_columns: tuple
    covariate_names: tuple
    options: FitOptions
    probit_iterations: int = 0
    flags: tuple = ()

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def n_observed(self) -> int:
        return self.counts[0] + self.counts[1]

    @property
    def sigma2_ml(self) -> float:
        """Residual variance at the ML denominator (observed rows, no rank correction)."""
        return self.sigma2_eps * self.df_residual / self.n_observed

    def transformed_baseline(self, y0) -> np.ndarray:
        y0 = np.asarray(y0, dtype=float)
        if self.baseline_standardization is None:
            return y0
        mean, sd = self.baseline_standardization
        return (y0 - mean) / sd

    def probit_index(self, dataset: TrialDataset, arm=None) -> np.ndarray:
        """Fitted discontinuation index for each subject, optionally forcing the arm."""
        if self.gamma is None:
            raise EstimabilityError("probit parameters unavailable (no dropouts in fit)")
        b = self.transformed_baseline(dataset.y0)
        x = dataset.x if arm is None else np.full(dataset.n, float(arm))
        idx = self.gamma[0] + self.gamma[1] * b + self.gamma[2] * x
        if len(self.gamma) > 3:
            idx = idx + dataset.extra @ self.gamma[3:]
        return idx

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "delta": self.delta,
            "delta_x": self.delta_x,
            "sigma2_eps": self.sigma2_eps,
            "gamma": None if self.gamma is None else self.gamma.tolist(),
            "pi_hat": self.pi_hat,
            "loglik": self.loglik,
            "regression_covariance": self.regression_covariance.tolist(),
            "probit_covariance": None
            if self.probit_covariance is None
            else self.probit_covariance.tolist(),
            "baseline_standardization": None
            if self.baseline_standardization is None
            else list(self.baseline_standardization),
            "counts": {
                "completer": self.counts[0],
                "retrieved_dropout": self.counts[1],
                "lost_to_follow_up": self.counts[2],
            },
            "design_rank": self.design_rank,
            "df_residual": self.df_residual,
            "design_columns": list(self.design_columns),
            "options": {
                "baseline_slope_mode": self.options.baseline_slope_mode,
                "standardize_baseline": self.options.standardize_baseline,
                "delta_mode": self.options.delta_mode,
            },
            "flags": list(self.flags),
        }


# ---------------------------------------------------------------------------
# design construction


def _regression_design(dataset: TrialDataset, options: FitOptions, include_delta: bool):
    """Design for subjects with observed endpoints, plus column names."""
    obs = dataset.q == 1
    cols = [np.ones(int(obs.sum())), dataset.y0[obs], dataset.x[obs].astype(float)]
    names = ["intercept", "baseline", "arm"]
    for j, name in enumerate(dataset.covariate_names):
        cols.append(dataset.extra[obs, j])
        names.append(name)
    if include_delta:
        rd = (dataset.d[obs] == 0).astype(float)
        cols.append(rd)
        names.append("dropout")
        if options.delta_mode == "arm_specific":
            cols.append(rd * dataset.x[obs])
            names.append("dropout_x")
    return np.column_stack(cols), tuple(names), obs


def _probit_free_design(dataset: TrialDataset, options: FitOptions, b: np.ndarray):
    """Free-coefficient design and offset for the discontinuation probit."""
    if options.baseline_slope_mode == "fixed_unit":
        cols = [np.ones(dataset.n), dataset.x.astype(float)]
        offset = b
    else:
        cols = [np.ones(dataset.n), b, dataset.x.astype(float)]
        offset = np.zeros(dataset.n)
    for j in range(len(dataset.covariate_names)):
        cols.append(dataset.extra[:, j])
    return np.column_stack(cols), offset


def _assemble_gamma(theta: np.ndarray, options: FitOptions) -> np.ndarray:
    """Free parameters -> full (intercept, baseline, arm, extras) order."""
    if options.baseline_slope_mode == "fixed_unit":
        return np.concatenate([[theta[0], 1.0], theta[1:]])
    return np.concatenate([[theta[0], theta[1], theta[2]], theta[3:]])


# ---------------------------------------------------------------------------
# probit Newton-Raphson (batched; a single fit is a batch of one)


def _probit_loglik_batch(v, offset, sign, theta):
    idx = offset + theta @ v.T
    return norm_logcdf(sign * idx).sum(axis=1)


def _probit_newton_batch(v, offset, dmat, tol, max_iter, start):
    """Newton with per-replicate step halving on sum log Phi(s * (offset + V theta)).

    dmat is (B, n) of continuation indicators. Returns (theta, converged,
    iterations); replicates that separate or fail to improve are marked
    unconverged rather than raising. Steps whose gain is below float roundoff
    of the log-likelihood are accepted, otherwise the line search would stall
    one Newton step short of the gradient tolerance.
    """
    dmat = np.asarray(dmat, dtype=float)
    n_batch, _ = dmat.shape
    sign = 1.0 - 2.0 * dmat  # +1 where discontinued
    theta = np.tile(np.asarray(start, dtype=float), (n_batch, 1))
    converged = np.zeros(n_batch, dtype=bool)

    degenerate = dmat.min(axis=1) == dmat.max(axis=1)
    act = np.flatnonzero(~degenerate)
    ll = np.full(n_batch, -np.inf)
    if act.size:
        ll[act] = _probit_loglik_batch(v, offset, sign[act], theta[act])
    iterations = 0

    for _ in range(max_iter):
        if act.size == 0:
            break
        iterations += 1
        s_a = sign[act]
        idx = offset + theta[act] @ v.T
        log_phi = -0.5 * (math.log(2 * math.pi) + idx**2)
        lam = s_a * np.exp(log_phi - norm_logcdf(s_a * idx))
        score = lam @ v
        gnorm = np.linalg.norm(score, axis=1)
        done = (gnorm <= tol) & np.isfinite(gnorm)
        if done.any():
            converged[act[done]] = True
            keep = ~done
            act, s_a, idx, lam, score = act[keep], s_a[keep], idx[keep], lam[keep], score[keep]
            if act.size == 0:
                break

        w = lam * (lam + idx)
        hess = np.einsum("bn,np,nq->bpq", w, v, v)
        step = np.einsum("bpq,bq->bp", np.linalg.pinv(hess, hermitian=True), score)

        slack = 1e-9 * (1.0 + np.abs(ll[act]))
        scale = np.ones(act.size)
        accepted = np.zeros(act.size, dtype=bool)
        pending = np.arange(act.size)
        for _ in range(30):
            trial = theta[act[pending]] + scale[pending, None] * step[pending]
            ll_trial = _probit_loglik_batch(v, offset, s_a[pending], trial)
            good = np.isfinite(ll_trial) & (ll_trial >= ll[act[pending]] - slack[pending])
            took = pending[good]
            theta[act[took]] = trial[good]
            ll[act[took]] = ll_trial[good]
            accepted[took] = True
            pending = pending[~good]
            if pending.size == 0:
                break
            scale[pending] /= 2.0
        act = act[accepted]  # stuck replicates drop out unconverged

    return theta, converged, iterations


def fit_probit(dataset: TrialDataset, options: FitOptions | None = None):
    """Maximize the discontinuation probit likelihood by Newton-Raphson.

    Returns (gamma, probit_covariance, iterations) with gamma in full design
    order; in fixed_unit mode the baseline coefficient is exactly 1 and the
    covariance covers the free coordinates only.
    """
    options = options or FitOptions()
    d = dataset.d
    if d.min() == d.max():
        raise SeparationError(
            "every subject has the same continuation status; probit likelihood unbounded"
        )
    if options.standardize_baseline:
        mean, sd = float(np.mean(dataset.y0)), float(np.std(dataset.y0, ddof=1))
        if sd == 0:
            raise EstimabilityError("baseline has zero variance; cannot standardize")
        b = (dataset.y0 - mean) / sd
    else:
        b = dataset.y0.astype(float)

    v, offset = _probit_free_design(dataset, options, b)
    start = np.zeros(v.shape[1])
    theta, converged, iterations = _probit_newton_batch(
        v, offset, d[None, :], options.probit_tol, options.probit_max_iter, start
    )
    if not converged[0]:
        idx = offset + v @ theta[0]
        sign = 1.0 - 2.0 * d
        log_phi = -0.5 * (math.log(2 * math.pi) + idx**2)
        gnorm = float(np.linalg.norm((sign * np.exp(log_phi - norm_logcdf(sign * idx))) @ v))
        raise ConvergenceError(
            f"probit Newton did not converge in {options.probit_max_iter} iterations "
            f"(gradient norm {gnorm:.3e}); data may be quasi-separated"
        )

    idx = offset + v @ theta[0]
    sign = 1.0 - 2.0 * d
    log_phi = -0.5 * (math.log(2 * math.pi) + idx**2)
    lam = sign * np.exp(log_phi - norm_logcdf(sign * idx))
    info = (v * (lam * (lam + idx))[:, None]).T @ v
    cov = np.linalg.inv(info)
    return _assemble_gamma(theta[0], options), cov, iterations


# ---------------------------------------------------------------------------
# joint fit


def fit_joint(dataset: TrialDataset, options: FitOptions | None = None) -> JointModelFit:
    """Separated maximum likelihood for the full joint model."""
    options = options or FitOptions()
    n_completer = dataset.n_completer
    n_rd = dataset.n_rd
    n_ltfu = dataset.n_ltfu
    n_dropout = n_rd + n_ltfu
    flags = []

    include_delta = n_rd > 0
    if not include_delta:
        flags.append("delta_inestimable")
    u, names, obs = _regression_design(dataset, options, include_delta)
    z = dataset.endpoints[obs]
    ls = least_squares_fit(u, z)
    if ls.rank_deficient:
        flags.append("regression_rank_deficient")

    n_base_cols = 3 + len(dataset.covariate_names)
    beta = ls.coefficients[:n_base_cols]
    delta = float(ls.coefficients[names.index("dropout")]) if include_delta else None
    delta_x = (
        float(ls.coefficients[names.index("dropout_x")])
        if include_delta and options.delta_mode == "arm_specific"
        else None
    )

    standardization = None
    if options.standardize_baseline:
        standardization = (float(np.mean(dataset.y0)), float(np.std(dataset.y0, ddof=1)))

    gamma = None
    probit_cov = None
    iterations = 0
    if n_dropout == 0:
        flags.append("no_dropouts")
    else:
        gamma, probit_cov, iterations = fit_probit(dataset, options)

    if n_dropout == 0:
        pi_hat = None
        flags.append("pi_undefined")
    else:
        pi_hat = n_rd / n_dropout
        if pi_hat in (0.0, 1.0):
            flags.append("pi_boundary")

    fit = JointModelFit(
        beta=beta,
        delta=delta,
        delta_x=delta_x,
        sigma2_eps=ls.sigma2_hat,
        gamma=gamma,
        pi_hat=pi_hat,
        loglik=0.0,
        regression_covariance=ls.sigma2_hat * ls.unscaled_covariance,
        probit_covariance=probit_cov,
        baseline_standardization=standardization,
        counts=(n_completer, n_rd, n_ltfu),
        design_rank=ls.rank,
        df_residual=ls.df_residual,
        design_columns=names,
        covariate_names=dataset.covariate_names,
        options=options,
        probit_iterations=iterations,
        flags=tuple(flags),
    )
    return replace(fit, loglik=observed_loglik(fit, dataset))


# ---------------------------------------------------------------------------
# observed log-likelihood


def _regression_params(fit: JointModelFit) -> np.ndarray:
    parts = [fit.beta]
    if "dropout" in fit.design_columns:
        parts.append([fit.delta])
    if "dropout_x" in fit.design_columns:
        parts.append([fit.delta_x])
    return np.concatenate(parts)


def loglik_components(fit: JointModelFit, dataset: TrialDataset) -> tuple:
    """(regression, discontinuation, retrieval) pieces of the observed log-likelihood.

    The three pieces share no parameters, which is what justifies the
    separated fit.
    """
    if not fit.sigma2_eps > 0:
        raise ValueError("sigma2_eps must be positive")

    u, _, obs = _regression_design(
        dataset, fit.options, include_delta="dropout" in fit.design_columns
    )
    mean = u @ _regression_params(fit)
    reg = float(np.sum(norm_logpdf(dataset.endpoints[obs], mean, fit.sigma2_eps)))

    if fit.gamma is None:
        probit = 0.0
    else:
        idx = fit.probit_index(dataset)
        sign = 1.0 - 2.0 * dataset.d
        probit = float(np.sum(norm_logcdf(sign * idx)))

    n_rd = dataset.n_rd
    n_ltfu = dataset.n_ltfu
    if n_rd + n_ltfu == 0 or fit.pi_hat is None:
        retrieval = 0.0
    else:
        pi = fit.pi_hat
        if (pi <= 0.0 and n_rd > 0) or (pi >= 1.0 and n_ltfu > 0):
            raise ValueError(f"pi={pi} outside (0,1) while both retrieval classes occur")
        retrieval = 0.0
        if n_rd > 0:
            retrieval += n_rd * math.log(pi)
        if n_ltfu > 0:
            retrieval += n_ltfu * math.log1p(-pi)

    return reg, probit, retrieval


def observed_loglik(fit: JointModelFit, dataset: TrialDataset) -> float:
    """Observed-data log-likelihood at the given parameters."""
    return float(sum(loglik_components(fit, dataset)))


# ---------------------------------------------------------------------------
# treatment effects


def hypothetical_effect(fit: JointModelFit) -> EffectEstimate:
    """Treatment effect had discontinuation not occurred: the fitted arm coefficient."""
    j = fit.design_columns.index("arm")
    est = float(fit.beta[j])
    se = float(math.sqrt(fit.regression_covariance[j, j]))
    df = fit.df_residual
    tstat = est / se if se > 0 else float("inf") * np.sign(est) if est else 0.0
    p = float(2.0 * stats.t.sf(abs(tstat), df))
    tq = float(stats.t.ppf(0.975, df))
    return EffectEstimate(
        estimate=est,
        se=se,
        ci_low=est - tq * se,
        ci_high=est + tq * se,
        strategy=HYPOTHETICAL,
        method="ml_t",
        ci_level=0.95,
        df=df,
        statistic=tstat,
        p_value=p,
        flags=tuple(f for f in fit.flags if f in ("delta_inestimable", "no_dropouts")),
    )


def _tp_point(fit: JointModelFit, dataset: TrialDataset) -> float:
    """Plug-in treatment-policy effect averaging probit contrasts over all N subjects."""
    j = fit.design_columns.index("arm")
    beta_x = float(fit.beta[j])
    p1 = norm_cdf(fit.probit_index(dataset, arm=1))
    p0 = norm_cdf(fit.probit_index(dataset, arm=0))
    delta0 = fit.delta
    delta1 = fit.delta + (fit.delta_x or 0.0)
    return beta_x + float(np.mean(delta1 * p1 - delta0 * p0))


def tp_effect_plugin(fit: JointModelFit, dataset: TrialDataset) -> EffectEstimate:
    """Point estimate of the treatment-policy effect (SE comes from bootstrap_tp).

    When no dropout shift is estimable the treatment-policy effect equals the
    hypothetical effect by convention and the result is flagged.
    """
    if fit.delta is None or fit.gamma is None:
        hyp = hypothetical_effect(fit)
        return EffectEstimate(
            estimate=hyp.estimate,
            se=float("nan"),
            ci_low=float("nan"),
            ci_high=float("nan"),
            strategy=TREATMENT_POLICY,
            method="tp_plugin",
            flags=("delta_inestimable_equals_hypothetical",),
        )
    return EffectEstimate(
        estimate=_tp_point(fit, dataset),
        se=float("nan"),
        ci_low=float("nan"),
        ci_high=float("nan"),
        strategy=TREATMENT_POLICY,
        method="tp_plugin",
    )


def tp_effect_closed_form(beta_x, delta, gamma0, gamma_x, mu0, sigma0_sq) -> float:
    """Treatment-policy effect when the probit-scale baseline is N(mu0, sigma0_sq)."""
    if sigma0_sq < 0:
        raise ValueError("sigma0_sq must be nonnegative")
    scale = math.sqrt(1.0 + sigma0_sq)
    hi = norm_cdf((gamma0 + mu0 + gamma_x) / scale)
    lo = norm_cdf((gamma0 + mu0) / scale)
    return float(beta_x + delta * (hi - lo))


# ---------------------------------------------------------------------------
# bootstrap


def bootstrap_tp(
    fit: JointModelFit,
    dataset: TrialDataset,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    resample_residuals: bool = True,
    max_retries: int = 10,
) -> BootstrapResult:
    """Three-step bootstrap for the treatment-policy effect.

    Per replicate: (1) resimulate discontinuation from the fitted probit and
    refit its free coefficients; (2) rebuild observed-row responses from the
    fitted means (original dropout indicators) plus residuals resampled with
    replacement, and refit the regression; (3) recompute the plug-in effect
    with the replicate parameters. Replicates draw from independent derived
    streams, so results do not depend on execution order or thread count.

    ``resample_residuals=False`` keeps each row's own residual in step 2 (a
    sensitivity variant that removes the regression-stage noise).
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if B < math.ceil(2.0 / alpha):
        raise ValueError(f"B={B} too small for {alpha=} quantiles; need B >= {math.ceil(2.0 / alpha)}")
    if fit.delta is None or fit.gamma is None:
        raise EstimabilityError("bootstrap needs an estimable dropout shift and probit fit")

    options = fit.options
    n = dataset.n
    b_std = fit.transformed_baseline(dataset.y0)
    v, offset = _probit_free_design(dataset, options, b_std)
    if options.baseline_slope_mode == "fixed_unit":
        theta_hat = np.concatenate([[fit.gamma[0]], fit.gamma[2:]])
    else:
        theta_hat = fit.gamma.copy()
    fit_index = offset + v @ theta_hat

    u, _, obs = _regression_design(
        dataset, options, include_delta="dropout" in fit.design_columns
    )
    xi_hat = _regression_params(fit)
    fitted = u @ xi_hat
    resid = dataset.endpoints[obs] - fitted
    pool = resid - resid.mean()
    m = u.shape[0]
    ls_op = np.linalg.pinv(u)  # minimum-norm least-squares operator, (p, m)

    base = RngStream(seed).child("tp_bootstrap")
    gens = [base.child(b).generator() for b in range(B)]
    eta = np.empty((B, n))
    ridx = np.empty((B, m), dtype=np.int64)
    for b in range(B):
        eta[b] = gens[b].standard_normal(n)
        ridx[b] = gens[b].integers(0, m, size=m)

    theta_rep = np.empty((B, len(theta_hat)))
    pending = np.arange(B)
    total_retries = 0
    for attempt in range(max_retries + 1):
        d_sim = (fit_index[None, :] + eta[pending] < 0).astype(float)
        theta_new, ok, _ = _probit_newton_batch(
            v, offset, d_sim, options.probit_tol, options.probit_max_iter, theta_hat
        )
        theta_rep[pending[ok]] = theta_new[ok]
        pending = pending[~ok]
        if pending.size == 0:
            break
        if attempt == max_retries:
            raise SeparationError(
                f"{pending.size} bootstrap replicate(s) kept separating after "
                f"{max_retries} redraws (e.g. replicate {int(pending[0])})"
            )
        total_retries += pending.size
        for b in pending:
            eta[b] = gens[b].standard_normal(n)

    if resample_residuals:
        z_rep = fitted[None, :] + pool[ridx]
    else:
        z_rep = (fitted + resid)[None, :].repeat(B, axis=0)
    xi_rep = z_rep @ ls_op.T  # (B, p)

    j_arm = fit.design_columns.index("arm")
    j_drop = fit.design_columns.index("dropout")
    beta_x_rep = xi_rep[:, j_arm]
    delta0_rep = xi_rep[:, j_drop]
    if "dropout_x" in fit.design_columns:
        delta1_rep = delta0_rep + xi_rep[:, fit.design_columns.index("dropout_x")]
    else:
        delta1_rep = delta0_rep

    v1 = v.copy()
    v0 = v.copy()
    arm_col = 1 if options.baseline_slope_mode == "fixed_unit" else 2
    v1[:, arm_col] = 1.0
    v0[:, arm_col] = 0.0
    p1 = norm_cdf(offset[None, :] + theta_rep @ v1.T)
    p0 = norm_cdf(offset[None, :] + theta_rep @ v0.T)
    replicates = beta_x_rep + np.mean(delta1_rep[:, None] * p1 - delta0_rep[:, None] * p0, axis=1)

    point = _tp_point(fit, dataset)
    se = float(np.std(replicates, ddof=1))
    q_lo = float(np.quantile(replicates, alpha / 2.0))
    q_hi = float(np.quantile(replicates, 1.0 - alpha / 2.0))
    return BootstrapResult(
        B=B,
        replicates=replicates,
        se=se,
        ci_low=2.0 * point - q_hi,
        ci_high=2.0 * point - q_lo,
        seed=seed,
        n_retries=total_retries,
    )


def tp_effect_with_bootstrap(
    fit: JointModelFit,
    dataset: TrialDataset,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> tuple:
    """Plug-in treatment-policy effect with bootstrap SE, CI, and normal test."""
    point = tp_effect_plugin(fit, dataset)
    if "delta_inestimable_equals_hypothetical" in point.flags:
        return point, None
    boot = bootstrap_tp(fit, dataset, B=B, alpha=alpha, seed=seed)
    if boot.se > 0:
        z = point.estimate / boot.se
        p = float(2.0 * stats.norm.sf(abs(z)))
    else:
        z = float("inf") if point.estimate != 0 else 0.0
        p = 0.0 if point.estimate != 0 else 1.0
    est = EffectEstimate(
        estimate=point.estimate,
        se=boot.se,
        ci_low=boot.ci_low,
        ci_high=boot.ci_high,
        strategy=TREATMENT_POLICY,
        method="tp_plugin_bootstrap",
        ci_level=1.0 - alpha,
        statistic=z,
        p_value=p,
    )
    return est, boot
