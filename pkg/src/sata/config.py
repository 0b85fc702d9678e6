"""Run configuration: flat ``section.key=value`` text files.

Example::

    # comments start with '#'
    seed = 3
    model.hidden = 64
    train.lr = 0.001
    loss.w_vel = 0.5
    run.stitch = blend
    embedding.kind = hash

Unknown sections or keys raise ``ConfigError`` naming the key.
"""

from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError, InvalidConfig
from .model import ModelConfig
from .training import LossWeights, TrainConfig


@dataclass(frozen=True)
class EmbeddingConfig:
    kind: str = "hash"
    dimension: int = 64
    seed: int = 0
    path: str = ""


@dataclass(frozen=True)
class RunOptions:
    stitch: str = "crop"
    fs_variant: str = "plain"
    units: str = "auto"


@dataclass(frozen=True)
class PathConfig:
    data: str = ""
    tags: str = ""
    embeddings: str = ""
    checkpoint: str = ""
    output: str = ""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    run: RunOptions = field(default_factory=RunOptions)
    paths: PathConfig = field(default_factory=PathConfig)

    def to_dict(self):
        return {
            "seed": self.seed,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "loss": self.loss.to_dict(),
            "embedding": asdict(self.embedding),
            "run": asdict(self.run),
            "paths": asdict(self.paths),
        }


SECTIONS = ("model", "train", "loss", "embedding", "run", "paths")


def _coerce(key, raw, current):
    text = raw.strip()
    if isinstance(current, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {raw!r}")
    try:
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
    except ValueError:
        raise ConfigError(key, f"expected a {type(current).__name__}, got {raw!r}") from None
    return text


def parse_text(text, source="<config>"):
    """``{dotted key: raw string}`` from config text; later lines win."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}", f"expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if not k:
            raise ConfigError(f"{source}:{n}", "empty key")
        out[k] = v.strip()
    return out


def build(entries, base=None):
    """Apply ``{dotted key: raw}`` overrides to ``base`` (default config)."""
    cfg = base or RunConfig()
    groups = {}
    seed = cfg.seed
    for key, raw in entries.items():
        if key == "seed":
            seed = _coerce(key, raw, 0)
            continue
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(key, f"unknown key; sections are {', '.join(SECTIONS)} plus 'seed'")
        obj = getattr(cfg, section)
        known = {f.name: getattr(obj, f.name) for f in fields(obj)}
        if name not in known:
            raise ConfigError(key, f"unknown key in section {section!r}")
        groups.setdefault(section, {})[name] = _coerce(key, raw, known[name])
    updates = {"seed": seed}
    for section, vals in groups.items():
        try:
            updates[section] = replace(getattr(cfg, section), **vals)
        except InvalidConfig as e:
            raise ConfigError(section, str(e)) from None
    return replace(cfg, **updates)


def load(path=None, overrides=()):
    """Config from an optional file plus ``key=value`` override strings."""
    entries = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            entries.update(parse_text(fh.read(), str(path)))
    for item in overrides:
        entries.update(parse_text(item, "--set"))
    return build(entries)
