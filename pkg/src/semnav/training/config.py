"""Training configuration with YAML round-trip."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..mapper.config import ProjectionConfig
from ..policy.model import PolicyConfig
from ..world.render import NoiseConfig, RenderConfig


@dataclass(frozen=True)
class TrainConfig:
    # scenes: train and test are different environments
    train_scene_seeds: tuple[int, ...] = tuple(range(8))
    test_scene_seeds: tuple[int, ...] = tuple(range(100, 103))
    scene_min_size: int = 8
    scene_max_size: int = 12
    scene_object_density: float = 0.06
    r_env: int = 12
    seed: int = 0
    dtype: str = "float32"

    # rendering
    image_h: int = 32
    image_w: int = 48
    noise: dict = field(default_factory=dict)  # NoiseConfig overrides

    # mapper pretraining
    map: ProjectionConfig = field(default_factory=ProjectionConfig)
    episodes_short: int = 350
    episode_len_short: int = 5
    episodes_long: int = 150
    episode_len_long: int = 20
    holdout_fraction: float = 0.15
    mapper_epochs: int = 10
    lr_mapper: float = 1e-3

    # policy training (online dataset aggregation)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    pool_size: int = 300
    pool_expert_fraction: float = 0.8
    pool_random_len: int = 20
    p0: float = 0.9
    gamma_decay: float = 0.99
    dagger_iterations: int = 200
    batch_size: int = 8
    lr_policy: float = 1e-4
    max_steps: int = 100
    onpolicy_len: int = 30   # truncation cap for on-policy training rollouts
    freeze_map: bool = False
    tbptt: int = 20

    def __post_init__(self):
        overlap = set(self.train_scene_seeds) & set(self.test_scene_seeds)
        if overlap:
            raise ValueError(f"train/test scene seeds overlap: {sorted(overlap)}")
        if not (0.0 < self.p0 <= 1.0):
            raise ValueError("p0 must be in (0, 1]")
        if not (0.0 < self.gamma_decay < 1.0):
            raise ValueError("gamma_decay must be in (0, 1)")
        if self.map.r != self.r_env:
            raise ValueError("map orientation bins must equal r_env")

    @property
    def np_dtype(self):
        return {"float32": np.float32, "float64": np.float64}[self.dtype]

    def scene_size(self, index: int) -> int:
        span = self.scene_max_size - self.scene_min_size + 1
        return self.scene_min_size + index % span

    def render_config(self) -> RenderConfig:
        return RenderConfig(image_h=self.image_h, image_w=self.image_w,
                            n_object_classes=self.map.c_d, r_env=self.r_env,
                            noise=NoiseConfig(**self.noise))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["train_scene_seeds"] = list(self.train_scene_seeds)
        d["test_scene_seeds"] = list(self.test_scene_seeds)
        d["map"] = self.map.to_dict()
        d["policy"] = self.policy.to_dict()
        d["noise"] = dict(self.noise)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for key in ("train_scene_seeds", "test_scene_seeds"):
            if key in d:
                d[key] = tuple(d[key])
        if "map" in d:
            d["map"] = ProjectionConfig.from_dict(d["map"])
        if "policy" in d:
            d["policy"] = PolicyConfig.from_dict(d["policy"])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))
