"""Joint-name normalization, description lookup and embedding providers."""

import hashlib
import json
import re
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DescriptionFallback, DimensionMismatch, MissingEmbedding, ValidationError

DEFAULT_TEXT_DIM = 64
SIDES = ("left", "right", "center")


def normalize_joint_name(raw):
    """Lookup key for a raw joint name.

    Namespace prefixes (``rig:``) and numeric indices are dropped, camelCase
    and separators are unified into lower-case ``_``-joined tokens:
    ``"Spine_1"`` and ``"Spine2"`` both give ``"spine"``.
    """
    s = str(raw).strip()
    s = s.rsplit(":", 1)[-1]
    s = re.sub(r"([a-z])([A-Z])", r"\1_\2", s)
    s = re.sub(r"([A-Z]+)([A-Z][a-z])", r"\1_\2", s)
    s = re.sub(r"\d+", " ", s)
    tokens = [t.lower() for t in re.split(r"[^A-Za-z]+", s) if t]
    return "_".join(tokens) if tokens else "joint"


def side_of(name):
    tokens = normalize_joint_name(name).split("_")
    if "left" in tokens or tokens[0] == "l" or tokens[-1] == "l":
        return "left"
    if "right" in tokens or tokens[0] == "r" or tokens[-1] == "r":
        return "right"
    return "center"


class TagDictionary:
    """Joint name -> functional description, with normalized fallback keys."""

    def __init__(self, entries=None):
        self.entries = {}
        self._normalized = {}
        self.sides = {}
        for k, v in (entries or {}).items():
            self.add(k, v)

    def add(self, name, description):
        if not isinstance(description, str) or not description.strip():
            raise ValidationError(f"description for {name!r} must be a non-empty string")
        self.entries[name] = description
        self._normalized.setdefault(normalize_joint_name(name), description)
        self.sides[name] = side_of(name)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, name):
        return name in self.entries or normalize_joint_name(name) in self._normalized

    def lookup(self, name):
        """``(description, how)`` with ``how`` in exact/normalized/fallback."""
        if name in self.entries:
            return self.entries[name], "exact"
        key = normalize_joint_name(name)
        if key in self._normalized:
            return self._normalized[key], "normalized"
        return key, "fallback"

    def merged(self, other):
        out = TagDictionary(self.entries)
        for k, v in other.entries.items():
            out.add(k, v)
        return out

    def to_dict(self):
        return dict(self.entries)

    @classmethod
    def from_json(cls, path):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: tags file must be a JSON object")
        return cls(data)

    def save(self, path):
        Path(path).write_text(json.dumps(self.entries, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def builtin(cls, name):
        """Shipped dictionaries: ``"human"`` or ``"quadruped"``."""
        text = resources.files("sata.data").joinpath(f"tags_{name}.json").read_text(encoding="utf-8")
        return cls(json.loads(text))


def resolve_descriptions(skeleton, tags):
    """One description per joint; unmatched joints fall back to their key."""
    out = []
    for name in skeleton.names:
        desc, how = tags.lookup(name)
        if how == "fallback":
            warnings.warn(f"no description for joint {name!r}; using {desc!r}", DescriptionFallback, stacklevel=2)
        out.append(desc)
    return out


class HashEmbedding:
    """Deterministic pseudo-random unit vectors keyed by the description.

    Stands in for a frozen text encoder; identical strings map to identical
    vectors on every platform, distinct strings are nearly orthogonal.
    """

    kind = "hash"

    def __init__(self, dimension=DEFAULT_TEXT_DIM, seed=0):
        self.dimension = int(dimension)
        self.seed = int(seed)

    def vector(self, description):
        digest = hashlib.sha256(f"{self.seed}\x00{description}".encode("utf-8")).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))
        v = rng.standard_normal(self.dimension)
        return v / np.linalg.norm(v)

    def __call__(self, descriptions):
        if not descriptions:
            return np.zeros((0, self.dimension))
        return np.stack([self.vector(d) for d in descriptions])

    def config(self):
        return {"kind": self.kind, "dimension": self.dimension, "seed": self.seed}


class TableEmbedding:
    """Exact lookup in a precomputed ``{description: vector}`` table."""

    kind = "table"

    def __init__(self, dimension, vectors, path=None):
        self.dimension = int(dimension)
        self.vectors = {}
        self.path = path
        for desc, vec in vectors.items():
            arr = np.asarray(vec, dtype=float)
            if arr.shape != (self.dimension,):
                raise DimensionMismatch(f"embedding for {desc!r} has shape {arr.shape}, expected ({self.dimension},)")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"embedding for {desc!r} is not finite")
            self.vectors[desc] = arr

    @classmethod
    def from_json(cls, path):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        try:
            return cls(data["dimension"], data["vectors"], path=str(path))
        except (KeyError, TypeError):
            raise ValidationError(f"{path}: expected {{'dimension': d, 'vectors': {{...}}}}") from None

    def __call__(self, descriptions):
        missing = sorted({d for d in descriptions if d not in self.vectors})
        if missing:
            raise MissingEmbedding(missing)
        if not descriptions:
            return np.zeros((0, self.dimension))
        return np.stack([self.vectors[d] for d in descriptions])

    def config(self):
        return {"kind": self.kind, "dimension": self.dimension, "path": self.path}


def make_provider(kind="hash", dimension=DEFAULT_TEXT_DIM, seed=0, path=None):
    if kind == "hash":
        return HashEmbedding(dimension, seed)
    if kind == "table":
        if path is None:
            raise ValidationError("table embedding provider needs a path")
        table = TableEmbedding.from_json(path)
        if dimension is not None and table.dimension != int(dimension):
            raise DimensionMismatch(f"table dimension {table.dimension} != configured d_text {dimension}")
        return table
    raise ValidationError(f"unknown embedding provider {kind!r}")


def embed(descriptions, provider):
    """``J x d_text`` matrix of description embeddings."""
    out = np.asarray(provider(list(descriptions)), dtype=float)
    if out.shape != (len(descriptions), provider.dimension):
        raise DimensionMismatch(f"provider returned {out.shape}, expected ({len(descriptions)}, {provider.dimension})")
    return out
