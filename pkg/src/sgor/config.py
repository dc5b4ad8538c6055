"""Pipeline configuration, its TOML serialization and the named ablation variants."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ground import KITTI_GROUND_LABELS

SEMANTIC_MODES = ("off", "tight", "loose")

# name -> field overrides; mirrors the ablation rows
VARIANTS: dict[str, dict[str, object]] = {
    "full": {},
    "geometric-only": {"semantic": "off"},
    "semantic-hard": {"semantic": "tight"},
    "no-ground-gate": {"ground_gate": False},
    "no-preprocess": {"preprocess": False},
    "label-only-ground": {"secondary_segmentation": False},
}


@dataclass(frozen=True)
class PipelineConfig:
    """Every threshold and count of the pipeline.

    Lengths are in meters, ``sigma_theta`` in degrees and ``tau_1`` in m².
    ``tau_1`` and ``k1`` are derived from ``sigma_d`` and ``k`` when left
    unset.
    """

    sigma_d: float = 0.6
    sigma_g: float = 0.2
    sigma_theta: float = 5.0
    tau_1: float | None = None
    n_seeds: int = 100
    k: int = 40
    k1: int | None = None
    r_s: float = 1.0
    cap: int = 8000
    ground_labels: tuple[int, ...] = field(default=tuple(sorted(KITTI_GROUND_LABELS)))
    semantic: str = "loose"
    ground_gate: bool = True
    preprocess: bool = True
    secondary_segmentation: bool = True

    def __post_init__(self):
        if self.tau_1 is None:
            object.__setattr__(self, "tau_1", self.sigma_d * self.sigma_d)
        if self.k1 is None:
            object.__setattr__(self, "k1", max(3, self.k // 2))
        object.__setattr__(self, "ground_labels", tuple(sorted(int(v) for v in self.ground_labels)))
        for name in ("sigma_d", "sigma_g", "sigma_theta", "tau_1", "r_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.sigma_theta < 90:
            raise ValueError("sigma_theta must lie in (0, 90) degrees")
        if not (3 <= self.k1 <= self.k <= self.cap) or self.n_seeds < 1:
            raise ValueError("need 3 <= k1 <= k <= cap and n_seeds >= 1")
        if self.semantic not in SEMANTIC_MODES:
            raise ValueError(f"semantic must be one of {SEMANTIC_MODES}")

    def with_variant(self, name: str) -> PipelineConfig:
        if name not in VARIANTS:
            raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
        return dataclasses.replace(self, **VARIANTS[name])

    def to_dict(self) -> dict[str, object]:
        d = dataclasses.asdict(self)
        d["ground_labels"] = list(self.ground_labels)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> PipelineConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        if "ground_labels" in kw:
            kw["ground_labels"] = tuple(kw["ground_labels"])  # type: ignore[arg-type]
        return cls(**kw)

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> PipelineConfig:
        return cls.from_dict(tomllib.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> PipelineConfig:
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")
