"""
Pydantic schemas for everything that is configured, serialised or persisted:
simulation specs, Dirichlet priors, experiment configs, metric records and
run manifests.
"""
import math
from datetime import datetime
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.config import config

METHOD_IDS = (
    "mult_repl",
    "mult_lognorm",
    "mult_KMSS",
    "lr_em",
    "lr_da",
    "lr_SVD",
    "GBM",
    "PLS",
    "dl_unif",
    "add1",
)

RESULT_COLUMNS = ("method", "variant", "m", "p", "rep", "status", "ced", "adcs", "runtime_s", "neg_rows")
# The partial file also records how each cell's CED was normalised.
PARTIAL_COLUMNS = RESULT_COLUMNS + ("ced_basis",)


class DMSpec(BaseModel):
    """Dirichlet-multinomial simulation parameters."""

    model_config = ConfigDict(frozen=True)

    alpha: List[float] = Field(min_length=2)
    depth: int = Field(ge=1)
    n: int = Field(default=100, ge=1)

    @field_validator("alpha")
    @classmethod
    def alpha_positive(cls, v):
        if any(not a > 0 for a in v):
            raise ValueError("Dirichlet parameters must be positive")
        return v


PRIOR_NAMES = ("Haldane", "Perks", "Jeffreys", "BayesLaplace", "custom", "geometric")


class DirichletPrior(BaseModel):
    """
    Dirichlet prior with strength s and center t.

    "geometric" carries no center of its own: it is estimated per row from the
    data by the GBM imputer.
    """

    model_config = ConfigDict(frozen=True)

    name: Literal["Haldane", "Perks", "Jeffreys", "BayesLaplace", "custom", "geometric"]
    strength: float = Field(default=0.0, ge=0)
    center: Optional[List[float]] = None

    @model_validator(mode="after")
    def center_is_probability(self):
        if self.name == "geometric":
            return self
        if self.center is None:
            raise ValueError(f"prior {self.name} needs a center vector")
        t = np.asarray(self.center, dtype=float)
        if np.any(t <= 0) or not math.isclose(t.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("prior center must be positive and sum to 1")
        return self

    @classmethod
    def named(cls, name: str, D: int, center: Optional[List[float]] = None, strength: Optional[float] = None):
        """Standard priors with a uniform center: Haldane s=0, Perks s=1, Jeffreys s=D/2, Bayes-Laplace s=D."""
        if name == "geometric":
            return cls(name="geometric")
        strengths = {"Haldane": 0.0, "Perks": 1.0, "Jeffreys": D / 2.0, "BayesLaplace": float(D)}
        if name == "custom":
            if strength is None or center is None:
                raise ValueError("a custom prior needs both strength and center")
            return cls(name="custom", strength=strength, center=list(center))
        if name not in strengths:
            raise ValueError(f"unknown prior {name!r}; expected one of {', '.join(PRIOR_NAMES)}")
        return cls(name=name, strength=strengths[name], center=[1.0 / D] * D)


class SparsitySweep(BaseModel):
    kind: Literal["sparsity"] = "sparsity"
    m_list: List[int] = Field(default_factory=lambda: list(config.BENCH_M_GRID), min_length=1)
    p_list: List[float] = Field(default_factory=lambda: list(config.BENCH_P_GRID), min_length=1)


class DimensionSweep(BaseModel):
    kind: Literal["dimension"] = "dimension"
    p_fixed: List[float] = Field(default_factory=lambda: [0.2, 0.5], min_length=1)
    m_list: List[int] = Field(default_factory=lambda: list(config.BENCH_M_GRID), min_length=1)


class ExperimentConfig(BaseModel):
    """One benchmark run."""

    input: Union[str, DMSpec]
    design: Union[SparsitySweep, DimensionSweep] = Field(discriminator="kind")
    methods: List[str] = Field(min_length=1)
    reps: int = Field(default_factory=lambda: config.BENCH_REPS, ge=1)
    base_seed: int = Field(default_factory=lambda: config.BASE_SEED, ge=0, lt=2**64)
    variants: List[Literal["raw", "ceil"]] = Field(default_factory=lambda: ["raw", "ceil"], min_length=1)
    out_dir: str = ""
    jobs: int = Field(default_factory=lambda: config.JOBS, ge=1)
    timeout_s: float = Field(default_factory=lambda: config.TIMEOUT_S, gt=0)
    zero_columns: Literal["every_second", "random_half"] = "every_second"
    parity: Literal["even", "odd"] = "even"
    omit_runtime: bool = False
    method_params: Dict[str, Dict[str, Union[int, float, str, bool]]] = Field(default_factory=dict)

    @field_validator("methods")
    @classmethod
    def known_methods(cls, v):
        unknown = [m for m in v if m not in METHOD_IDS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; valid identifiers: {', '.join(METHOD_IDS)}")
        return v

    @model_validator(mode="after")
    def grid_ranges(self):
        design = self.design
        ps = design.p_list if isinstance(design, SparsitySweep) else design.p_fixed
        if any(not 0 < p < 1 for p in ps):
            raise ValueError("zero proportions must lie in (0, 1)")
        if any(m < 2 for m in design.m_list):
            raise ValueError("m values must be at least 2")
        return self

    @property
    def grid(self) -> List[tuple]:
        """(m, p) pairs in run order."""
        design = self.design
        if isinstance(design, SparsitySweep):
            return [(m, p) for m in design.m_list for p in design.p_list]
        return [(m, p) for p in design.p_fixed for m in design.m_list]


def _format(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


class MetricRecord(BaseModel):
    """One (method, variant, m, p, rep) evaluation."""

    method: str
    variant: Literal["raw", "ceil"] = "raw"
    m: int = Field(ge=2)
    p: float = Field(gt=0, lt=1)
    rep: int = Field(ge=0)
    status: Literal["ok", "failed", "degenerate"]
    ced: Optional[float] = Field(default=None, ge=0)
    adcs: Optional[float] = Field(default=None, ge=0)
    runtime_s: Optional[float] = Field(default=None, ge=0)
    neg_rows: int = Field(default=0, ge=0)
    reason: str = Field(default="", exclude=True)
    ced_basis: Literal["", "observed", "all"] = Field(default="", exclude=True)

    @model_validator(mode="after")
    def metrics_iff_ok(self):
        has_metrics = self.ced is not None and self.adcs is not None
        if (self.status == "ok") != has_metrics:
            raise ValueError("ced and adcs must be present exactly when status is ok")
        return self

    @property
    def sort_key(self):
        return (self.method, self.variant, self.m, self.p, self.rep)

    def to_row(self, omit_runtime: bool = False, with_basis: bool = False) -> List[str]:
        row = [
            self.method,
            self.variant,
            str(self.m),
            repr(float(self.p)),
            str(self.rep),
            self.status,
            _format(self.ced),
            _format(self.adcs),
            "" if omit_runtime else _format(self.runtime_s),
            str(self.neg_rows),
        ]
        if with_basis:
            row.append(self.ced_basis)
        return row


class RunManifest(BaseModel):
    run_id: str
    command: str
    config: Dict
    base_seed: int
    versions: Dict[str, str] = Field(default_factory=dict)
    started: datetime
    finished: Optional[datetime] = None
    n_records: int = 0
    n_failed: int = 0
    ced_basis: Dict[str, int] = Field(default_factory=dict)
