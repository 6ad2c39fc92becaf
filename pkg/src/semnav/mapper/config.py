"""Map and projection hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass, field

MODALITY_DIMS_KEY = {"rgb": "l_i", "det": "l_d", "seg": "l_s"}


@dataclass(frozen=True)
class ProjectionConfig:
    u: int = 29
    v: int = 29
    u_prime: int = 21
    v_prime: int = 21
    r: int = 12
    x_b: float = 300.0
    z_b: float = 300.0
    c_d: int = 5
    c_s: int = 8
    l_i: int = 32
    l_d: int = 16
    l_s: int = 16
    n_img_feat: int = 32   # image encoder output channels (n')
    phi_hidden: int = 64   # first conv width of each small embedding net
    modalities: tuple[str, ...] = ("rgb", "det", "seg")

    def __post_init__(self):
        if self.u_prime > self.u or self.v_prime > self.v:
            raise ValueError("egocentric grid must not exceed the map")
        for name, val in (("u", self.u), ("v", self.v),
                          ("u_prime", self.u_prime), ("v_prime", self.v_prime)):
            if val % 2 != 1:
                raise ValueError(f"{name} must be odd")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.x_b <= 0 or self.z_b <= 0:
            raise ValueError("bin sizes must be positive")
        unknown = set(self.modalities) - set(MODALITY_DIMS_KEY)
        if unknown:
            raise ValueError(f"unknown modalities: {sorted(unknown)}")
        if not self.modalities:
            raise ValueError("at least one modality required")

    def embedding_dim(self, modality: str) -> int:
        return getattr(self, MODALITY_DIMS_KEY[modality])

    @property
    def n(self) -> int:
        """Map feature dimension: sum of active modality embedding dims."""
        return sum(self.embedding_dim(m) for m in self.modalities)

    def modality_input_dim(self, modality: str) -> int:
        return {"rgb": self.n_img_feat, "det": self.c_d, "seg": self.c_s}[modality]

    @property
    def center(self) -> tuple[int, int]:
        return (self.u - 1) // 2, (self.v - 1) // 2

    @property
    def ego_center(self) -> tuple[int, int]:
        return (self.u_prime - 1) // 2, (self.v_prime - 1) // 2

    def to_dict(self) -> dict:
        return {
            "u": self.u, "v": self.v, "u_prime": self.u_prime,
            "v_prime": self.v_prime, "r": self.r, "x_b": self.x_b,
            "z_b": self.z_b, "c_d": self.c_d, "c_s": self.c_s,
            "l_i": self.l_i, "l_d": self.l_d, "l_s": self.l_s,
            "n_img_feat": self.n_img_feat, "phi_hidden": self.phi_hidden,
            "modalities": list(self.modalities),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProjectionConfig":
        d = dict(d)
        if "modalities" in d:
            d["modalities"] = tuple(d["modalities"])
        return cls(**d)
