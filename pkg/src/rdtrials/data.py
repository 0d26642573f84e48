"""Data model for two-visit trial datasets: endpoint definition, subject
records, CSV ingestion and structural validation.

The on-disk format is a headered CSV ``subject_id,y0,x,d,q,y_T[,cov1,...]``
with x, d, q in {0,1} and y_T empty exactly when q=0. A record with d=1, q=0
is rejected outright: subjects still on treatment are assessed at the final
visit.
"""

import csv
import enum
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DatasetError

__all__ = [
    "EndpointSpec",
    "SubjectRecord",
    "SubjectClass",
    "TrialDataset",
    "compute_endpoint",
    "invert_endpoint",
    "classify",
    "load_dataset",
    "save_dataset",
]

CANONICAL_COLUMNS = ("subject_id", "y0", "x", "d", "q", "y_T")


@dataclass(frozen=True)
class EndpointSpec:
    """Endpoint construction Z = omega * (y_T - nu * y0).

    omega_mode "constant" uses the fixed factor ``omega``; mode
    "per_subject_100_over_baseline" uses 100/y0 (percent change), which
    requires a nonzero baseline for every subject.
    """

    nu: float
    omega_mode: str = "constant"
    omega: float = 1.0

    def __post_init__(self):
        if self.omega_mode not in ("constant", "per_subject_100_over_baseline"):
            raise ValueError(f"unknown omega_mode {self.omega_mode!r}")

    @staticmethod
    def response() -> "EndpointSpec":
        return EndpointSpec(nu=0.0)

    @staticmethod
    def change_from_baseline() -> "EndpointSpec":
        return EndpointSpec(nu=1.0)

    @staticmethod
    def percent_change() -> "EndpointSpec":
        return EndpointSpec(nu=1.0, omega_mode="per_subject_100_over_baseline")

    def omega_for(self, y0: float) -> float:
        if self.omega_mode == "constant":
            return self.omega
        if y0 == 0.0:
            raise DatasetError("per-subject endpoint scaling undefined at baseline 0")
        return 100.0 / y0


def compute_endpoint(y0: float, y_t: float, spec: EndpointSpec) -> float:
    """Endpoint value omega * (y_T - nu * y0)."""
    return spec.omega_for(y0) * (y_t - spec.nu * y0)


def invert_endpoint(z: float, y0: float, spec: EndpointSpec) -> float:
    """Final-visit response implied by an endpoint value (inverse of compute_endpoint)."""
    return z / spec.omega_for(y0) + spec.nu * y0


class SubjectClass(enum.Enum):
    COMPLETER = "completer"
    RETRIEVED_DROPOUT = "retrieved_dropout"
    LOST_TO_FOLLOW_UP = "lost_to_follow_up"


@dataclass(frozen=True)
class SubjectRecord:
    """One randomized subject.

    d is the treatment-continuation indicator, q the final-visit retrieval
    indicator. y_t is None exactly when q=0.
    """

    subject_id: str
    y0: float
    x: int
    d: int
    q: int
    y_t: float | None
    extra_covariates: tuple = ()

    def validate(self, where: str = "record") -> None:
        if not np.isfinite(self.y0):
            raise DatasetError(f"{where}: baseline y0 is missing or non-finite")
        if self.x not in (0, 1) or self.d not in (0, 1) or self.q not in (0, 1):
            raise DatasetError(f"{where}: x, d, q must each be 0 or 1")
        if self.d == 1 and self.q == 0:
            raise DatasetError(
                f"{where}: d=1 with q=0 is implausible (on-treatment subjects are assessed)"
            )
        if self.q == 1 and (self.y_t is None or not np.isfinite(self.y_t)):
            raise DatasetError(f"{where}: q=1 requires an observed final-visit response")
        if self.q == 0 and self.y_t is not None:
            raise DatasetError(f"{where}: q=0 forbids a final-visit response")
        if any(not np.isfinite(c) for c in self.extra_covariates):
            raise DatasetError(f"{where}: extra covariates must be finite")


def classify(record: SubjectRecord) -> SubjectClass:
    """Partition a record into completer / retrieved dropout / lost to follow-up."""
    if record.d == 1:
        return SubjectClass.COMPLETER
    if record.q == 1:
        return SubjectClass.RETRIEVED_DROPOUT
    return SubjectClass.LOST_TO_FOLLOW_UP


@dataclass(frozen=True)
class TrialDataset:
    """Immutable collection of subject records plus the endpoint definition."""

    subjects: tuple
    endpoint_spec: EndpointSpec
    covariate_names: tuple = ()

    def __post_init__(self):
        if not self.subjects:
            raise DatasetError("dataset has no subjects")
        seen = set()
        n_cov = len(self.covariate_names)
        for i, rec in enumerate(self.subjects):
            rec.validate(where=f"subject {rec.subject_id!r}")
            if rec.subject_id in seen:
                raise DatasetError(f"duplicate subject_id {rec.subject_id!r}")
            seen.add(rec.subject_id)
            if len(rec.extra_covariates) != n_cov:
                raise DatasetError(
                    f"subject {rec.subject_id!r}: expected {n_cov} extra covariates, "
                    f"got {len(rec.extra_covariates)}"
                )
            if self.endpoint_spec.omega_mode != "constant" and rec.y0 == 0.0:
                raise DatasetError(
                    f"subject {rec.subject_id!r}: per-subject endpoint scaling needs y0 != 0"
                )
        xs = {rec.x for rec in self.subjects}
        if xs != {0, 1}:
            raise DatasetError("both treatment arms must be non-empty")

    @property
    def n(self) -> int:
        return len(self.subjects)

    @cached_property
    def y0(self) -> np.ndarray:
        return np.array([rec.y0 for rec in self.subjects])

    @cached_property
    def x(self) -> np.ndarray:
        return np.array([rec.x for rec in self.subjects])

    @cached_property
    def d(self) -> np.ndarray:
        return np.array([rec.d for rec in self.subjects])

    @cached_property
    def q(self) -> np.ndarray:
        return np.array([rec.q for rec in self.subjects])

    @cached_property
    def extra(self) -> np.ndarray:
        return np.array([rec.extra_covariates for rec in self.subjects]).reshape(
            self.n, len(self.covariate_names)
        )

    @cached_property
    def endpoints(self) -> np.ndarray:
        """Endpoint per subject, NaN where unobserved (q=0)."""
        out = np.full(self.n, np.nan)
        for i, rec in enumerate(self.subjects):
            if rec.q == 1:
                out[i] = compute_endpoint(rec.y0, rec.y_t, self.endpoint_spec)
        return out

    @cached_property
    def classes(self) -> tuple:
        return tuple(classify(rec) for rec in self.subjects)

    @property
    def n_completer(self) -> int:
        return sum(c is SubjectClass.COMPLETER for c in self.classes)

    @property
    def n_rd(self) -> int:
        return sum(c is SubjectClass.RETRIEVED_DROPOUT for c in self.classes)

    @property
    def n_ltfu(self) -> int:
        return sum(c is SubjectClass.LOST_TO_FOLLOW_UP for c in self.classes)

    def replace_subjects(self, subjects) -> "TrialDataset":
        return TrialDataset(
            subjects=tuple(subjects),
            endpoint_spec=self.endpoint_spec,
            covariate_names=self.covariate_names,
        )


def _parse_float(text: str, row: int, col: str):
    text = text.strip()
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise DatasetError(f"row {row}: column {col!r} is not numeric: {text!r}") from None


def _parse_binary(text: str, row: int, col: str) -> int:
    text = text.strip()
    if text not in ("0", "1"):
        raise DatasetError(f"row {row}: column {col!r} must be 0 or 1, got {text!r}")
    return int(text)


def load_dataset(source, spec: EndpointSpec, schema: dict | None = None) -> TrialDataset:
    """Read a trial CSV into a validated TrialDataset.

    ``source`` may be a path or an open text/byte stream. ``schema`` optionally
    maps canonical column names to the file's actual header names. Columns
    beyond the canonical six are carried as extra covariates in header order.
    """
    close = False
    if isinstance(source, str):
        fh = open(source, "r", encoding="utf-8", newline="")
        close = True
    elif isinstance(source, bytes):
        fh = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, (io.RawIOBase, io.BufferedIOBase)):
        fh = io.TextIOWrapper(source, encoding="utf-8", newline="")
    else:
        fh = source

    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError("CSV is empty (no header)")
        mapping = dict(schema) if schema else {}
        resolved = {name: mapping.get(name, name) for name in CANONICAL_COLUMNS}
        missing = [c for c in resolved.values() if c not in reader.fieldnames]
        if missing:
            raise DatasetError(f"CSV header lacks required columns: {missing}")
        cov_cols = [c for c in reader.fieldnames if c not in set(resolved.values())]

        subjects = []
        for idx, row in enumerate(reader, start=2):  # header is line 1
            where = f"row {idx}"
            sid = (row[resolved["subject_id"]] or "").strip()
            if not sid:
                raise DatasetError(f"{where}: empty subject_id")
            y0 = _parse_float(row[resolved["y0"]] or "", idx, "y0")
            if y0 is None:
                raise DatasetError(f"{where}: missing baseline y0 (only y_T may be missing)")
            x = _parse_binary(row[resolved["x"]] or "", idx, "x")
            d = _parse_binary(row[resolved["d"]] or "", idx, "d")
            q = _parse_binary(row[resolved["q"]] or "", idx, "q")
            y_t = _parse_float(row[resolved["y_T"]] or "", idx, "y_T")
            covs = []
            for c in cov_cols:
                v = _parse_float(row[c] or "", idx, c)
                if v is None:
                    raise DatasetError(f"{where}: missing covariate {c!r}")
                covs.append(v)
            rec = SubjectRecord(
                subject_id=sid, y0=y0, x=x, d=d, q=q, y_t=y_t, extra_covariates=tuple(covs)
            )
            rec.validate(where=where)
            subjects.append(rec)
    finally:
        if close:
            fh.close()

    return TrialDataset(
        subjects=tuple(subjects), endpoint_spec=spec, covariate_names=tuple(cov_cols)
    )


def save_dataset(dataset: TrialDataset, target) -> None:
    """Write a dataset back to the canonical CSV layout."""
    close = False
    if isinstance(target, str):
        fh = open(target, "w", encoding="utf-8", newline="")
        close = True
    else:
        fh = target
    try:
        writer = csv.writer(fh)
        writer.writerow(list(CANONICAL_COLUMNS) + list(dataset.covariate_names))
        for rec in dataset.subjects:
            y_t = "" if rec.y_t is None else repr(rec.y_t)
            writer.writerow(
                [rec.subject_id, repr(rec.y0), rec.x, rec.d, rec.q, y_t]
                + [repr(c) for c in rec.extra_covariates]
            )
    finally:
        if close:
            fh.close()
