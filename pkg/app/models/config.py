import math
from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app import config as settings
from app.models.design import StructureSpec
from app.models.geometry import DiscSpec


class Boundary(str, Enum):
    CIRCULAR = "circular"
    PER_GROUP = "per-group"


class TvOptions(BaseModel):
    """Weight and stopping rule of the per-time-slice TV problems"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: Optional[float] = Field(
        None, alias="lambda", gt=0,
        description="TV weight; when omitted it is lam_scale * max|data|"
    )
    lam_scale: float = Field(1e-6, gt=0)
    max_iter: int = Field(2000, ge=1)
    tol: float = Field(1e-8, gt=0, description="relative primal change stopping threshold")
    boundary: Boundary = Boundary.CIRCULAR
    group_size: int = Field(16, ge=1, description="sensors per group for the per-group boundary")


class GeometryConfig(BaseModel):
    n: int = Field(64, ge=1)
    R: float = Field(1.0, gt=0)
    Omega: float = Field(2 * math.pi, gt=0, le=2 * math.pi)
    q: int = Field(512, ge=4)
    n_r: int = Field(128, ge=2)


class StructureConfig(BaseModel):
    b: int = Field(4, ge=1)
    g: int = Field(4, ge=1)
    group_count: int = Field(4, ge=1)
    m0: int = Field(12, ge=1)
    k: int = Field(4, ge=1, description="column-subset size of the SIN (2s)")
    n_iter: int = Field(100, ge=1)
    per_group: bool = Field(False, description="design every group separately instead of reusing one")
    random_min_sin: float = Field(1e-3, ge=0)
    random_max_draws: int = Field(100000, ge=1)

    def spec(self) -> StructureSpec:
        return StructureSpec(b=self.b, g=self.g, group_count=self.group_count, m0=self.m0)


class PhantomConfig(BaseModel):
    preset: Optional[Literal["sparse", "nonsparse"]] = "sparse"
    discs: Optional[List[DiscSpec]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.discs is None and self.preset is None:
            raise ValueError("phantom needs a preset or an explicit disc list")
        return self

    @property
    def name(self) -> str:
        return "custom" if self.discs is not None else self.preset


class ExperimentConfig(BaseModel):
    """Everything one design / simulate / reconstruct run needs"""
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    structure: StructureConfig = Field(default_factory=StructureConfig)
    phantom: PhantomConfig = Field(default_factory=PhantomConfig)
    noise_level: float = Field(0.0, ge=0)
    tv: TvOptions = Field(default_factory=TvOptions)
    lam_scale_exact: float = Field(1e-6, gt=0)
    lam_scale_noisy: float = Field(1e-3, gt=0)
    seed: int = Field(0, ge=0)
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)

    @model_validator(mode="after")
    def _sensor_count(self):
        s = self.structure
        if self.geometry.n != s.b * s.g * s.group_count:
            raise ValueError(
                f"sensor count n={self.geometry.n} must equal b*g*group_count={s.b * s.g * s.group_count}"
            )
        return self

    def tv_options(self) -> TvOptions:
        """TV options with the data-relative weight matching the noise setting"""
        scale = self.lam_scale_noisy if self.noise_level > 0 else self.lam_scale_exact
        return self.tv.model_copy(update={"lam_scale": scale, "group_size": self.structure.b * self.structure.g})


class VariantErrors(BaseModel):
    rel_data_error: float = Field(..., ge=0)
    rel_cs_error: float = Field(..., ge=0)
    rel_fbp_error: float = Field(..., ge=0)


class ErrorReport(BaseModel):
    """Relative l2 errors of one run, per matrix variant"""
    phantom: str
    noise_level: float
    variants: Dict[str, VariantErrors]

    @property
    def label(self) -> str:
        return f"{self.phantom} phantom ({'noisy' if self.noise_level > 0 else 'exact'})"
