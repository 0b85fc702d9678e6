"""Model hyperparameters."""

from dataclasses import asdict, dataclass, fields

from ..errors import InvalidConfig
from ..graphrepr import FEATURE_DIM
from ..semantics import DEFAULT_TEXT_DIM


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 256
    heads: int = 4
    dropout: float = 0.1
    ff_inner: int = 512
    blocks_per_side: int = 3
    d_text: int = DEFAULT_TEXT_DIM
    sincos_bands: int = 8
    bottleneck: str = "vae"
    latent_dim: int = 128
    quantizers: int = 6
    codebook_size: int = 1024
    ema_decay: float = 0.99
    dead_code_steps: int = 50
    window: int = 64
    overlap: int = 16
    temporal: bool = True
    decoder_reinject: bool = False
    feature_dim: int = FEATURE_DIM
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden", "heads", "ff_inner", "blocks_per_side", "latent_dim", "quantizers",
                     "codebook_size", "window", "sincos_bands", "dead_code_steps", "feature_dim"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_text < 0:
            raise InvalidConfig("d_text must be >= 0")
        if self.hidden % self.heads:
            raise InvalidConfig(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if not 0 <= self.overlap < self.window:
            raise InvalidConfig(f"need window > overlap >= 0, got window={self.window}, overlap={self.overlap}")
        if not 0 <= self.dropout < 1:
            raise InvalidConfig("dropout must be in [0, 1)")
        if self.bottleneck not in ("vae", "rvq"):
            raise InvalidConfig(f"bottleneck must be 'vae' or 'rvq', got {self.bottleneck!r}")
        if not 0 < self.ema_decay < 1:
            raise InvalidConfig("ema_decay must be in (0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidConfig(f"unknown model config keys: {unknown}")
        return cls(**d)

    @classmethod
    def full(cls, bottleneck="vae"):
        """Full-size settings; RVQ uses a 256-d latent."""
        return cls(bottleneck=bottleneck, latent_dim=128 if bottleneck == "vae" else 256)

    @classmethod
    def toy(cls, **overrides):
        base = dict(hidden=64, heads=4, dropout=0.0, ff_inner=128, blocks_per_side=1, latent_dim=32,
                    quantizers=2, codebook_size=64)
        base.update(overrides)
        return cls(**base)
