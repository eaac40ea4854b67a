"""Run configuration: defaults, JSON loading, CLI overrides and a stable content hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .synth import SynthConfig

DEMO_CORPUS = "@demo"
AUTO = "auto"
# fields that change where or how fast a run happens but not what it produces
_UNHASHED = {"jobs", "out_dir", "keep_failures"}


@dataclass(frozen=True)
class IngestSettings:
    root: str = DEMO_CORPUS
    limit: int | None = None
    max_depth: int = 8


@dataclass(frozen=True)
class ExtractSettings:
    max_item_chars: int = 2000


@dataclass(frozen=True)
class SynthSettings:
    count: int = 50
    target_annotation_chars: int = 1107
    kind_weights: dict[str, float] | None = None
    max_items: int = 24
    template_id: str = "single-column"
    page_geometry: tuple[float, float] = (508.0, 640.0)
    margin_pt: float = 24.0
    font_size: int = 10


@dataclass(frozen=True)
class RenderSettings:
    engine: str = AUTO
    rasterizer: str = AUTO
    # calibrated so the median cropped page of the default template is close to 974 x 493 px
    dpi: float = 150.0
    timeout: float = 60.0
    keep_failures: bool = False


@dataclass(frozen=True)
class BoundarySettings:
    threshold: float = 0.92
    margin: int = 12
    edge_eps: int = 2
    min_aspect: float = 0.2
    max_aspect: float = 8.0
    min_area: int = 10_000


@dataclass(frozen=True)
class SplitSettings:
    ratios: tuple[int, int, int] = (8, 1, 1)
    seed: int | None = None  # defaults to the run seed


@dataclass(frozen=True)
class ForgeConfig:
    seed: int = 0
    jobs: int | None = None
    out_dir: str = "aceforge-out"
    ingest: IngestSettings = field(default_factory=IngestSettings)
    extract: ExtractSettings = field(default_factory=ExtractSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)
    render: RenderSettings = field(default_factory=RenderSettings)
    boundary: BoundarySettings = field(default_factory=BoundarySettings)
    split: SplitSettings = field(default_factory=SplitSettings)

    def validate(self) -> ForgeConfig:
        if self.synth.count < 1:
            raise ConfigError("synth.count must be at least 1")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.render.dpi <= 0:
            raise ConfigError("render.dpi must be positive")
        if self.render.timeout <= 0:
            raise ConfigError("render.timeout must be positive")
        if not 0 <= self.boundary.threshold <= 1:
            raise ConfigError("boundary.threshold must lie in [0, 1]")
        if self.boundary.margin < 0:
            raise ConfigError("boundary.margin must be nonnegative")
        if self.ingest.max_depth < 1:
            raise ConfigError("ingest.max_depth must be at least 1")
        if len(self.split.ratios) != 3 or any(r < 0 for r in self.split.ratios) or not sum(self.split.ratios):
            raise ConfigError("split.ratios must be three nonnegative integers with a positive sum")
        self.synth_config()  # SynthConfig checks its own invariants
        return self

    def synth_config(self) -> SynthConfig:
        s = self.synth
        return SynthConfig(
            seed=self.seed,
            target_annotation_chars=s.target_annotation_chars,
            kind_weights=s.kind_weights,
            max_items=s.max_items,
            template_id=s.template_id,
            page_geometry=tuple(s.page_geometry),
            margin_pt=s.margin_pt,
            font_size=s.font_size,
        )

    @property
    def effective_jobs(self) -> int:
        return self.jobs or os.cpu_count() or 1

    @property
    def split_seed(self) -> int:
        return self.seed if self.split.seed is None else self.split.seed

    def corpus_root(self) -> Path:
        if self.ingest.root == DEMO_CORPUS:
            return demo_corpus_path()
        return Path(self.ingest.root)

    def to_json(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    @property
    def config_hash(self) -> str:
        return config_hash(self)


def demo_corpus_path() -> Path:
    return Path(str(resources.files("aceforge") / "data" / "demo_corpus"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _strip_unhashed(obj):
    if isinstance(obj, dict):
        return {k: _strip_unhashed(v) for k, v in obj.items() if k not in _UNHASHED}
    return obj


def config_hash(cfg: ForgeConfig) -> str:
    """sha256 over the canonical JSON of every output-relevant field."""
    return hashlib.sha256(canonical_json(_strip_unhashed(cfg.to_json())).encode("utf-8")).hexdigest()


_SECTIONS = {
    "ingest": IngestSettings,
    "extract": ExtractSettings,
    "synth": SynthSettings,
    "render": RenderSettings,
    "boundary": BoundarySettings,
    "split": SplitSettings,
}
_TUPLE_FIELDS = {("synth", "page_geometry"), ("split", "ratios")}


def from_dict(data: dict, base: ForgeConfig | None = None) -> ForgeConfig:
    """Overlay ``data`` (same shape as ``ForgeConfig.to_json()``) on ``base``."""
    base = base or ForgeConfig()
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    top = {f.name for f in dataclasses.fields(ForgeConfig)}
    unknown = set(data) - top
    if unknown:
        raise ConfigError("unknown configuration keys: %s" % ", ".join(sorted(unknown)))
    changes = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError("section %r must be an object" % key)
            cls = _SECTIONS[key]
            names = {f.name for f in dataclasses.fields(cls)}
            bad = set(value) - names
            if bad:
                raise ConfigError("unknown keys in %s: %s" % (key, ", ".join(sorted(bad))))
            value = {k: tuple(v) if (key, k) in _TUPLE_FIELDS and v is not None else v for k, v in value.items()}
            changes[key] = dataclasses.replace(getattr(base, key), **value)
        else:
            changes[key] = value
    return dataclasses.replace(base, **changes)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ForgeConfig:
    cfg = ForgeConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config %s is not valid JSON: %s" % (path, exc)) from exc
        cfg = from_dict(data, cfg)
    if overrides:
        cfg = from_dict(overrides, cfg)
    try:
        return cfg.validate()
    except TypeError as exc:
        raise ConfigError("configuration value has the wrong type: %s" % exc) from exc
