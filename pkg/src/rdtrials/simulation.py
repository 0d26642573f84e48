"""Trial data-generating process, scenario configuration, replication engine,
and the evaluation metrics used to compare methods.

Every random draw comes from a stream keyed by (scenario seed, replication,
purpose), so adding methods or running replications in parallel never changes
the generated data, and reports are identical for any worker count.
"""

import json
import multiprocessing
from dataclasses import asdict, dataclass

import numpy as np

from .data import EndpointSpec, SubjectRecord, TrialDataset
from .errors import RdtrialsError
from .imputation import ImputationMethod, mi_analyze
from .joint import FitOptions, fit_joint, tp_effect_closed_form, tp_effect_with_bootstrap
from .numerics import RngStream

__all__ = [
    "ScenarioConfig",
    "MethodMetrics",
    "SimulationReport",
    "InferenceSettings",
    "generate_trial",
    "true_tp_effect",
    "run_study",
    "METHOD_NAMES",
]

METHOD_NAMES = ("proposed", "rtb", "washout", "rd")
_MI_KINDS = {"rtb": "return_to_baseline", "washout": "washout", "rd": "retrieved_dropout"}


@dataclass(frozen=True)
class ScenarioConfig:
    """True parameters and sampling law for one simulated trial setting."""

    n: int
    beta0: float
    beta_base: float
    beta_x: float
    delta: float
    gamma0: float
    gamma_x: float
    pi: float
    sigma_eps: float
    baseline_mean: float
    baseline_sd: float
    standardize_baseline_in_probit: bool = True
    seed: int = 0
    allocation: str = "deterministic"

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if not self.sigma_eps > 0:
            raise ValueError("sigma_eps must be positive")
        if not 0.0 < self.pi < 1.0:
            raise ValueError("pi must lie in (0, 1)")
        if not self.baseline_sd > 0:
            raise ValueError("baseline_sd must be positive")
        if self.allocation not in ("deterministic", "bernoulli"):
            raise ValueError(f"unknown allocation {self.allocation!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "ScenarioConfig":
        known = {f for f in ScenarioConfig.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return ScenarioConfig(**data)

    @staticmethod
    def from_json(path: str) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return ScenarioConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class InferenceSettings:
    """Bootstrap and multiple-imputation sizes used inside a study."""

    B: int = 1000
    M: int = 1000
    alpha: float = 0.05


def generate_trial(cfg: ScenarioConfig, replication: int) -> TrialDataset:
    """One simulated trial, deterministic given (cfg.seed, replication).

    Arms are allocated 1:1 (first half placebo) unless cfg.allocation is
    "bernoulli". The discontinuation probit applies a unit slope to the
    true-moment-standardized baseline when standardization is on.
    """
    root = RngStream(cfg.seed).child("rep", replication)
    n = cfg.n

    if cfg.allocation == "deterministic":
        x = np.zeros(n, dtype=int)
        x[n // 2 :] = 1
    else:
        x = root.child("arm").generator().integers(0, 2, size=n)
        if x.min() == x.max():  # degenerate draw; flip the last subject
            x[-1] = 1 - x[-1]

    y0 = cfg.baseline_mean + cfg.baseline_sd * root.child("baseline").generator().standard_normal(n)
    base_probit = (y0 - cfg.baseline_mean) / cfg.baseline_sd if cfg.standardize_baseline_in_probit else y0
    eta = root.child("eta").generator().standard_normal(n)
    d = (cfg.gamma0 + base_probit + cfg.gamma_x * x + eta < 0).astype(int)

    u_retrieval = root.child("retrieval").generator().random(n)
    q = np.where(d == 1, 1, (u_retrieval < cfg.pi).astype(int))

    eps = cfg.sigma_eps * root.child("epsilon").generator().standard_normal(n)
    z = cfg.beta0 + cfg.beta_base * y0 + cfg.beta_x * x + cfg.delta * (d == 0) + eps
    y_t = y0 + z  # change-from-baseline endpoint

    subjects = tuple(
        SubjectRecord(
            subject_id=f"s{i + 1:05d}",
            y0=float(y0[i]),
            x=int(x[i]),
            d=int(d[i]),
            q=int(q[i]),
            y_t=float(y_t[i]) if q[i] == 1 else None,
        )
        for i in range(n)
    )
    return TrialDataset(subjects=subjects, endpoint_spec=EndpointSpec.change_from_baseline())


def true_tp_effect(cfg: ScenarioConfig) -> float:
    """Closed-form treatment-policy effect implied by the scenario."""
    if cfg.standardize_baseline_in_probit:
        mu0, sigma0_sq = 0.0, 1.0
    else:
        mu0, sigma0_sq = cfg.baseline_mean, cfg.baseline_sd**2
    return tp_effect_closed_form(cfg.beta_x, cfg.delta, cfg.gamma0, cfg.gamma_x, mu0, sigma0_sq)


@dataclass(frozen=True)
class MethodMetrics:
    """Aggregate performance of one method over a study's replications."""

    method: str
    truth: float
    mean_bias: float
    rmse: float
    rejection_rate: float
    coverage: float
    mean_ci_length: float
    n_sim: int
    failures: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimulationReport:
    """Per-method metric rows plus the configuration that produced them."""

    scenario: ScenarioConfig
    inference: InferenceSettings
    rows: tuple

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "inference": asdict(self.inference),
            "rows": [row.to_dict() for row in self.rows],
        }

    def to_csv(self, target) -> None:
        """Table-layout CSV: method,true_tp,bias,rmse,rejection,coverage,ci_length."""
        lines = ["method,true_tp,bias,rmse,rejection,coverage,ci_length"]
        for row in self.rows:
            lines.append(
                f"{row.method},{row.truth:.6g},{row.mean_bias:.6g},{row.rmse:.6g},"
                f"{row.rejection_rate:.6g},{row.coverage:.6g},{row.mean_ci_length:.6g}"
            )
        text = "\n".join(lines) + "\n"
        if isinstance(target, str):
            with open(target, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            target.write(text)


def _canonical_methods(methods) -> tuple:
    if isinstance(methods, str):
        methods = [methods]
    out = []
    for name in methods:
        key = name.strip().lower().replace("-", "_")
        if key == "all":
            out.extend(METHOD_NAMES)
            continue
        if key in ("return_to_baseline",):
            key = "rtb"
        if key in ("retrieved_dropout", "rd_imputation"):
            key = "rd"
        if key not in METHOD_NAMES:
            raise ValueError(f"unknown method {name!r}; valid: {', '.join(METHOD_NAMES)} or 'all'")
        if key not in out:
            out.append(key)
    if not out:
        raise ValueError("no methods requested")
    return tuple(out)


def _fit_options(cfg: ScenarioConfig) -> FitOptions:
    return FitOptions(standardize_baseline=cfg.standardize_baseline_in_probit)


def _run_replication(args):
    cfg, methods, inference, replication = args
    dataset = generate_trial(cfg, replication)
    records = {}
    for method in methods:
        try:
            if method == "proposed":
                fit = fit_joint(dataset, _fit_options(cfg))
                seed = RngStream(cfg.seed).child("rep", replication, "bootstrap").stream_id
                est, _ = tp_effect_with_bootstrap(
                    fit, dataset, B=inference.B, alpha=inference.alpha, seed=seed
                )
            else:
                seed = RngStream(cfg.seed).child("rep", replication, "mi", method).stream_id
                est = mi_analyze(
                    dataset,
                    ImputationMethod(kind=_MI_KINDS[method]),
                    M=inference.M,
                    seed=seed,
                    ci_level=1.0 - inference.alpha,
                )
            records[method] = (
                est.estimate,
                est.ci_low,
                est.ci_high,
                bool(est.p_value is not None and est.p_value < inference.alpha),
            )
        except RdtrialsError:
            records[method] = None
    return replication, records


def run_study(
    cfg: ScenarioConfig,
    methods,
    n_sim: int,
    inference: InferenceSettings | None = None,
    workers: int = 1,
    max_failure_fraction: float = 0.01,
) -> SimulationReport:
    """Replicate the scenario n_sim times and score each method.

    Bias and RMSE are taken against the closed-form treatment-policy truth;
    rejection is the two-sided test of a zero effect at level alpha; coverage
    and length refer to each method's own interval (basic bootstrap for the
    proposed method, Rubin t for the imputation methods). Failed replications
    are counted per method and the study aborts if any method fails more than
    ``max_failure_fraction`` of the time.
    """
    if n_sim < 1:
        raise ValueError("n_sim must be at least 1")
    methods = _canonical_methods(methods)
    inference = inference or InferenceSettings()
    truth = true_tp_effect(cfg)

    tasks = [(cfg, methods, inference, r) for r in range(n_sim)]
    if workers > 1:
        chunk = max(1, n_sim // (workers * 8))
        with multiprocessing.get_context("fork").Pool(processes=workers) as pool:
            results = list(pool.imap_unordered(_run_replication, tasks, chunksize=chunk))
    else:
        results = [_run_replication(t) for t in tasks]
    results.sort(key=lambda item: item[0])

    rows = []
    for method in methods:
        recs = [res[1][method] for res in results]
        good = np.array([r for r in recs if r is not None])
        failures = sum(r is None for r in recs)
        if failures > max_failure_fraction * n_sim:
            raise RuntimeError(
                f"method {method!r} failed in {failures}/{n_sim} replications "
                f"(budget {max_failure_fraction:.0%})"
            )
        if good.size == 0:
            raise RuntimeError(f"method {method!r} produced no successful replications")
        est, lo, hi = good[:, 0], good[:, 1], good[:, 2]
        reject = good[:, 3]
        rows.append(
            MethodMetrics(
                method=method,
                truth=truth,
                mean_bias=float(np.mean(est - truth)),
                rmse=float(np.sqrt(np.mean((est - truth) ** 2))),
                rejection_rate=float(np.mean(reject)),
                coverage=float(np.mean((lo <= truth) & (truth <= hi))),
                mean_ci_length=float(np.mean(hi - lo)),
                n_sim=n_sim,
                failures=failures,
            )
        )
    return SimulationReport(scenario=cfg, inference=inference, rows=tuple(rows))
