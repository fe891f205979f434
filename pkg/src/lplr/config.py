"""Experiment configuration: sectioned ``key = value`` text or JSON.

Text form::

    [experiment]
    preset = convergence
    seed = 0

    [arch]
    depth = 3
    ...

JSON form uses the same section and key names as nested objects.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError

PRESETS = ("convergence", "pl_verify", "init_compare", "width_ablation", "custom")

# (section, key, default, comment)
_LAYOUT = [
    ("experiment", "preset", "convergence", "convergence | pl_verify | init_compare | width_ablation | custom"),
    ("experiment", "seed", 0, "drives data, init, power iteration, probes and shuffling"),
    ("arch", "depth", 3, "number of weight layers D"),
    ("arch", "width", 64, "hidden width m"),
    ("arch", "init", "he", "he | enhanced"),
    ("arch", "widths", (32, 64, 128, 256), "width_ablation sweep"),
    ("train", "eta_policy", "one_over_l", "one_over_l (eta = 1/L_hat at init) | fixed"),
    ("train", "eta", 0.001, "step size when eta_policy = fixed"),
    ("train", "epochs", 500, "full-batch steps (mini-batch: passes over the data)"),
    ("train", "batch_size", 0, "0 = full batch"),
    ("train", "snapshot_every", -1, "steps between NTK snapshots; -1 = epochs/25, 0 = never"),
    ("train", "smoothness_iters", 200, "power iterations for L_hat at init"),
    ("train", "snapshot_smoothness_iters", 50, "power iterations for L_hat at each snapshot"),
    ("train", "ntk_mode", "materialized", "materialized | blockwise"),
    ("train", "ntk_block", 64, "row block for blockwise NTK"),
    ("data", "source", "synthetic", "synthetic | idx"),
    ("data", "n", 100, "samples (synthetic) "),
    ("data", "d", 16, "input dimension (synthetic)"),
    ("data", "teacher_depth", 2, "teacher weight layers"),
    ("data", "teacher_width", 8, "teacher hidden width"),
    ("data", "noise_std", 0.0, "target noise"),
    ("data", "images", "", "IDX image file (source = idx)"),
    ("data", "labels", "", "IDX label file (source = idx)"),
    ("data", "class_a", 0, "digit mapped to +1"),
    ("data", "class_b", 1, "digit mapped to -1"),
    ("data", "max_n", 256, "keep at most this many samples"),
    ("probe", "radius", 0.0, "ball radius; 0 = |theta_final - theta_init| after training"),
    ("probe", "n_pairs", 200, "sampled pairs for curvature / descent probes"),
    ("analysis", "burn_in_frac", 0.1, "leading fraction excluded from the rate fit"),
]

_SECTIONS = {key: section for section, key, _, _ in _LAYOUT}
_COMMENTS = {key: comment for _, key, _, comment in _LAYOUT}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "convergence"
    seed: int = 0
    depth: int = 3
    width: int = 64
    init: str = "he"
    widths: tuple = (32, 64, 128, 256)
    eta_policy: str = "one_over_l"
    eta: float = 0.001
    epochs: int = 500
    batch_size: int = 0
    snapshot_every: int = -1
    smoothness_iters: int = 200
    snapshot_smoothness_iters: int = 50
    ntk_mode: str = "materialized"
    ntk_block: int = 64
    source: str = "synthetic"
    n: int = 100
    d: int = 16
    teacher_depth: int = 2
    teacher_width: int = 8
    noise_std: float = 0.0
    images: str = ""
    labels: str = ""
    class_a: int = 0
    class_b: int = 1
    max_n: int = 256
    radius: float = 0.0
    n_pairs: int = 200
    burn_in_frac: float = 0.1

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.source not in ("synthetic", "idx"):
            raise ConfigError(f"unknown data source {self.source!r}")
        if self.init not in ("he", "enhanced"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.eta_policy not in ("one_over_l", "fixed"):
            raise ConfigError(f"unknown eta_policy {self.eta_policy!r}")
        if self.epochs < 1 or self.depth < 1 or self.width < 1 or self.seed < 0:
            raise ConfigError("epochs, depth, width must be >= 1 and seed >= 0")
        if self.preset == "width_ablation" and len(self.widths) < 2:
            raise ConfigError("width_ablation needs at least two widths")

    @property
    def snapshot_interval(self) -> int:
        if self.snapshot_every < 0:
            return max(1, self.epochs // 25)
        return self.snapshot_every

    def check_paths(self) -> None:
        if self.source == "idx":
            for p in (self.images, self.labels):
                if not p or not Path(p).is_file():
                    raise ConfigError(f"IDX file not found: {p!r}")

    def to_dict(self) -> dict:
        out: dict = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out.setdefault(_SECTIONS[f.name], {})[f.name] = (
                list(value) if isinstance(value, tuple) else value
            )
        return out

    def to_text(self, header: str = "") -> str:
        lines = [f"# {line}" for line in header.splitlines()] if header else []
        current = None
        for f in fields(self):
            section = _SECTIONS[f.name]
            if section != current:
                if lines:
                    lines.append("")
                lines.append(f"[{section}]")
                current = section
            lines.append(f"# {_COMMENTS[f.name]}")
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(name: str, raw):
    default = getattr(ExperimentConfig, name)
    try:
        if isinstance(default, tuple):
            if isinstance(raw, str):
                items = [s for s in raw.replace(" ", "").split(",") if s]
            else:
                items = list(raw)
            return tuple(int(v) for v in items)
        if isinstance(default, bool):
            return raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes")
        if isinstance(default, int):
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _from_mapping(sections: dict) -> ExperimentConfig:
    values = {}
    for section, body in sections.items():
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, raw in body.items():
            if _SECTIONS.get(key) != section:
                raise ConfigError(f"unknown key {section}.{key}")
            values[key] = _coerce(key, raw)
    return ExperimentConfig(**values)


def parse_config(text: str) -> ExperimentConfig:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return _from_mapping(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return _from_mapping({s: dict(parser.items(s)) for s in parser.sections()})


def load_config(path, check_paths: bool = True) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text)
    if check_paths:
        cfg.check_paths()
    return cfg


def desk_profile() -> ExperimentConfig:
    return ExperimentConfig()


def full_scale_profile() -> ExperimentConfig:
    return ExperimentConfig(
        depth=5,
        width=2048,
        widths=(512, 1024, 2048, 4096),
        eta_policy="fixed",
        eta=0.001,
        epochs=250,
        batch_size=0,
        ntk_mode="blockwise",
        source="idx",
        images="train-images-idx3-ubyte",
        labels="train-labels-idx1-ubyte",
    )


FULL_SCALE_HEADER = """Full-scale profile: 5-layer ReLU MLP, width 2048, full-batch GD,
eta = 0.001, 250 epochs, binary MNIST subset (files supplied by path).
Width-2048 NTK snapshots are far beyond desk scale; expect hours per
snapshot. The convolutional experiment's mini-batch size of 128 is noted
for reference only; this profile runs full batch (batch_size = 0)."""

DESK_HEADER = """Desk profile: 3-layer ReLU MLP, width 64, synthetic teacher data
(n = 100, d = 16), eta = 1/L_hat, 500 full-batch steps, NTK snapshots every
epochs/25 steps (snapshot_every = -1)."""


def print_profile(full_scale: bool) -> str:
    if full_scale:
        return full_scale_profile().to_text(FULL_SCALE_HEADER)
    return desk_profile().to_text(DESK_HEADER)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
