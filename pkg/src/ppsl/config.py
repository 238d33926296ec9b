"""Run configuration: flat key=value sections, strict keys, canonical round trip."""

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields

from .encoder import EncoderConfig
from .prompt import PromptConfig
from .sampler import SamplerConfig


@dataclass
class DataConfig:
    edges: str = ""
    communities: str = ""
    synth_communities: int = 60
    synth_size: int = 10
    synth_p_in: float = 0.3
    synth_p_out: float = 0.01


@dataclass
class RunConfig:
    seed: int = 0
    queries: int = 50
    known: int = 100
    timing: bool = True


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    run: RunConfig = field(default_factory=RunConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)

    def sections(self) -> dict:
        return {
            "data": self.data,
            "run": self.run,
            "encoder": self.encoder,
            "sampler": self.sampler,
            "prompt": self.prompt,
        }

    def validate(self) -> None:
        self.encoder.validate()
        self.sampler.validate()
        self.prompt.validate()
        if self.run.queries < 1 or self.run.known < 1:
            raise ValueError("run.queries and run.known must be >= 1")


# feature_dim is derived from the data, never from the config file.
_HIDDEN_KEYS = {"encoder": {"feature_dim"}}


def _parse_value(raw: str, current, section: str, key: str):
    raw = raw.strip()
    kind = type(current)
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered not in ("true", "false"):
                raise ValueError
            return lowered == "true"
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(
            f"config [{section}] {key}: cannot parse {raw!r} as {kind.__name__}"
        ) from None


def load_config(path) -> PipelineConfig:
    """Parse an INI-style config; unknown sections or keys are hard errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh, source=str(path))
    cfg = PipelineConfig()
    sections = cfg.sections()
    for section in parser.sections():
        if section not in sections:
            raise ValueError(f"config {path}: unknown section [{section}]")
        target = sections[section]
        known_keys = {f.name for f in fields(target)} - _HIDDEN_KEYS.get(section, set())
        for key, raw in parser.items(section):
            if key not in known_keys:
                raise ValueError(f"config {path}: unknown key {key!r} in [{section}]")
            setattr(target, key, _parse_value(raw, getattr(target, key), section, key))
    cfg.validate()
    return cfg


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: PipelineConfig) -> str:
    """Canonical text form; parsing it back yields an equal config."""
    out = io.StringIO()
    for section, target in cfg.sections().items():
        out.write(f"[{section}]\n")
        for f in fields(target):
            if f.name in _HIDDEN_KEYS.get(section, set()):
                continue
            out.write(f"{f.name} = {_format_value(getattr(target, f.name))}\n")
        out.write("\n")
    return out.getvalue()


def config_fingerprint(cfg: PipelineConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()[:16]


def apply_seed_override(cfg: PipelineConfig, seed: int | None) -> PipelineConfig:
    if seed is not None:
        cfg.run.seed = int(seed)
    return cfg
