from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List


class CPTestSpec(BaseModel):
    extent: int = Field(50, ge=1)
    rank: int = Field(5, ge=1)
    order: int = Field(3, ge=2)
    collinearity: float = Field(0.9, ge=0.0, lt=1.0)
    noise_l1: float = Field(10.0, ge=0.0, lt=50.0)  # homoskedastic level
    noise_l2: float = Field(1.0, ge=0.0, lt=50.0)   # heteroskedastic level
    seed: int = 42

    @model_validator(mode="after")
    def rank_fits_extent(self):
        if self.rank > self.extent:
            raise ValueError(f"rank {self.rank} exceeds extent {self.extent}")
        return self

    @property
    def shape(self) -> List[int]:
        return [self.extent] * self.order


class PoissonSpec(BaseModel):
    h: float = Field(0.02, gt=0.0, lt=0.5)

    @field_validator("h")
    @classmethod
    def divides_unit_interval(cls, h: float) -> float:
        cells = 1.0 / h
        if abs(cells - round(cells)) > 1e-9 * cells:
            raise ValueError(f"mesh spacing {h} does not divide the unit interval")
        return h

    @property
    def grid(self) -> int:
        """Interior nodes per direction"""
        return int(round(1.0 / self.h)) - 1

    @property
    def dimension(self) -> int:
        return self.grid ** 2


class TuckerTestSpec(BaseModel):
    extents: List[int] = [60, 60, 60]
    true_ranks: List[int] = [20, 20, 20]
    ranks: List[int] = [10, 10, 10]
    noise_l1: float = Field(10.0, ge=0.0, lt=50.0)
    noise_l2: float = Field(10.0, ge=0.0, lt=50.0)
    seed: int = 42

    @model_validator(mode="after")
    def ranks_fit_extents(self):
        for name in ("true_ranks", "ranks"):
            ranks = getattr(self, name)
            if len(ranks) != len(self.extents):
                raise ValueError(f"{name} has {len(ranks)} entries for an order-{len(self.extents)} tensor")
            if any(not 1 <= r <= e for r, e in zip(ranks, self.extents)):
                raise ValueError(f"{name} {ranks} must lie between 1 and the extents {self.extents}")
        return self
