# nlslab/models.py
import math
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Scenario = Literal[
    "ground-state", "soliton", "pseudoconformal", "subcritical", "threshold-census", "operator-suite"
]
Label = Literal["disperse-like", "soliton-like", "blowup-like", "undecided"]


class GridParams(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    d: int = Field(4, ge=1)
    M: int = Field(512, ge=16)
    rmax: float = Field(30.0, gt=0)

    @classmethod
    def parse_spec(cls, spec: str) -> "GridParams":
        """Parse 'd=4,M=512,rmax=30' as used on the command line"""
        pairs = dict(item.split("=", 1) for item in spec.split(",") if item.strip())
        return cls(**{key.strip(): value.strip() for key, value in pairs.items()})


class SymmetryParams(BaseModel):
    theta0: float = Field(0.0, ge=0.0, lt=2 * math.pi)
    lambda0: float = Field(1.0, gt=0)
    T: Optional[float] = None
    t: float = 0.0

    @model_validator(mode="after")
    def _away_from_blowup(self):
        if self.T is not None and self.t == self.T:
            raise ValueError("The pseudo-conformal family is singular at t = T")
        return self


class EvolutionConfig(BaseModel):
    t0: float = 0.0
    t1: float = 1.0
    dt0: float = Field(0.01, gt=0)
    c_nl: float = Field(0.1, gt=0)
    k_max: Optional[float] = Field(None, gt=0)
    dt_min: float = Field(1e-7, gt=0)
    snapshot_dt: float = Field(0.125, gt=0)
    nonlinearity: float = 1.0

    @model_validator(mode="after")
    def _consistent(self):
        if not self.t1 > self.t0:
            raise ValueError(f"Time span must be increasing, got [{self.t0}, {self.t1}]")
        if not self.dt_min < self.dt0:
            raise ValueError(f"dt_min ({self.dt_min}) must be below dt0 ({self.dt0})")
        return self


class BlowupReport(BaseModel):
    detected: bool = False
    reason: Optional[Literal["kinetic-threshold", "step-floor", "unresolved"]] = None
    t_stop: Optional[float] = None
    t_est: Optional[float] = None
    alpha: Optional[float] = None
    fit_residual: Optional[float] = None


class PVQuadrature(BaseModel):
    h: float = Field(0.01, gt=0)
    extrapolation_order: Literal[0, 1] = 1
    upper_limit: Optional[float] = Field(None, gt=0)


class GroundStateCertificate(BaseModel):
    d: int
    M: int
    rmax: float
    method: str
    mass: float
    kinetic_sq: float
    potential: float
    energy: float
    residual: float
    c_gn: float
    q0: float
    unpolished_mass: Optional[float] = None
    unpolished_residual: Optional[float] = None
    snapshot_path: Optional[str] = None


class RatioStats(BaseModel):
    min: float
    max: float
    median: float


class BernsteinReport(BaseModel):
    N: float
    p: float
    q: float
    s: float
    trials: int
    derivative_up: RatioStats
    derivative_down: RatioStats
    lp_gain: RatioStats


class MismatchReport(BaseModel):
    kind: Literal["real", "freq"]
    params: Dict[str, float]
    m: float
    measured: float
    bound: float
    constant: float
    ratio: float
    within_bound: bool


class VirialReport(BaseModel):
    R: float
    times: List[float]
    second_difference: List[float]
    sixteen_energy: List[float]
    deviation_abs: float
    deviation_rel: float
    exterior_mass_fraction: float
    error_terms: Dict[str, float]


class ExteriorNorms(BaseModel):
    R: float
    mass_out: float
    mass_in: float
    l2_out: float
    kinetic_out: float
    potential_out: float


class ProfileDistance(BaseModel):
    delta: float
    theta: float
    lam: float


class LocalConstancy(BaseModel):
    value: float
    flagged: bool
    pair: List[float]


class DiagnosticsReport(BaseModel):
    R: float
    t: List[float]
    virial: List[float]
    virial_rate: List[float]
    virial_accel: List[Optional[float]]
    sixteen_energy: List[float]
    mass_out: List[float]
    kinetic_out: List[float]
    frequency_scale: List[float]
    profile_distance: List[Optional[float]]
    compactness: Dict[str, float]
    local_constancy: Optional[LocalConstancy] = None
    frequency_scale_definition: str = "median"


class ClassificationThresholds(BaseModel):
    version: str = "1"
    profile_distance: float = 0.2
    frequency_variation: float = 2.0
    amplitude_decay: float = 0.5


class ExperimentConfig(BaseModel):
    scenario: Scenario
    grid: GridParams = GridParams()
    t_span: List[float] = Field(default_factory=lambda: [0.0, 10.0])
    dt0: float = Field(0.005, gt=0)
    snapshot_dt: float = Field(0.125, gt=0)
    mass_ratio: float = Field(0.81, gt=0)
    census_ratios: List[float] = Field(default_factory=lambda: [0.7, 0.81, 0.9, 1.0, 1.1, 1.3])
    census_shapes: List[Literal["Q", "gaussian"]] = Field(default_factory=lambda: ["Q", "gaussian"])
    symmetry: SymmetryParams = SymmetryParams()
    blowup_time: float = 1.0
    k_max_factor: float = Field(100.0, gt=0)
    virial_radius: Optional[float] = Field(None, gt=0)
    probe_N: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0])
    probe_R: List[float] = Field(default_factory=lambda: [4.0, 8.0])
    probe_trials: int = Field(20, ge=20)
    seed: int = 0
    output_dir: Optional[str] = None
    certificate: Optional[str] = None
    thresholds: ClassificationThresholds = ClassificationThresholds()

    @field_validator("census_ratios")
    @classmethod
    def _positive_ratios(cls, ratios: List[float]) -> List[float]:
        if any(ratio <= 0 for ratio in ratios):
            raise ValueError("Mass ratios must be positive")
        return sorted(ratios)

    @field_validator("t_span")
    @classmethod
    def _span(cls, span: List[float]) -> List[float]:
        if len(span) != 2 or not span[1] > span[0]:
            raise ValueError(f"t_span must be [t0, t1] with t1 > t0, got {span}")
        return span


class RunManifest(BaseModel):
    config: ExperimentConfig
    code_version: str
    wall_time: float
    headline: Dict[str, Union[float, str, bool, None]]
    labels: Dict[str, Label] = {}
    outputs: List[str] = []
    content_hash: str
    manifest_hash: str
