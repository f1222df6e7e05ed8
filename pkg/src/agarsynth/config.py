"""TOML pipeline configuration.

Flat sections per stage; CLI flags override file values. Every knob from
the tuning ledger is tagged [paper]; everything else is [plumbing]. There
are exactly 13 [paper] parameters:

[extract]
  overlap_threshold = 0.01     [paper]    colony clustering
  unsharp_radius    = 1.5      [paper]    unsharp mask filtering
  unsharp_amount    = 0.7      [paper]
  l_thresh          = 30.0     [paper]    dark-artifact Lab thresholding
  b_thresh          = 15.0     [paper]
  artifact_dilate   = 2.0      [paper]    artifact mask dilation
  nl_h              = 0.08     [paper]    speckle noise cancellation
  nl_window         = 11       [paper]
  nl_patch          = 5        [plumbing]
  cv_mu             = 0.1      [paper]    Chan-Vese segmentation
  cv_max_iter       = 300      [paper]
  mask_margin       = 2.0      [paper]    segmentation mask dilation
  blend_scale       = 25.0     [paper]    blending mask
  crop_margin       = 8        [plumbing]
  inpaint_max_steps = 400      [plumbing]

[generate]
  patch_size = 512             [plumbing] dataset patch edge length
  count_mean = 10.0            [plumbing] mean of the exponential colony count
  n_patches, max_place_attempts, dish_inset_frac, seed,
  scale_augment/scale_min/scale_max (default off), species weights
                               [plumbing]

[stylize]
  lambda_style = 0.05          [paper]    neural style transfer weight
  mode, strength_semi, strength_full, bridge_jobs   [plumbing]

[evaluate]
  score_thresh = 0.5, count_per_class = false        [plumbing]
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import tomli

from .coco import SPECIES
from .segment import SegmentationParams


class ConfigError(Exception):
    pass


@dataclass
class ExtractSection:
    overlap_threshold: float = 0.01
    unsharp_radius: float = 1.5
    unsharp_amount: float = 0.7
    l_thresh: float = 30.0
    b_thresh: float = 15.0
    artifact_dilate: float = 2.0
    nl_h: float = 0.08
    nl_window: int = 11
    nl_patch: int = 5
    cv_mu: float = 0.1
    cv_max_iter: int = 300
    mask_margin: float = 2.0
    blend_scale: float = 25.0
    crop_margin: int = 8
    inpaint_max_steps: int = 400

    def segmentation_params(self) -> SegmentationParams:
        return SegmentationParams(
            crop_margin=self.crop_margin,
            unsharp_radius=self.unsharp_radius,
            unsharp_amount=self.unsharp_amount,
            l_thresh=self.l_thresh,
            b_thresh=self.b_thresh,
            artifact_dilate=self.artifact_dilate,
            inpaint_max_steps=self.inpaint_max_steps,
            nl_h=self.nl_h,
            nl_patch=self.nl_patch,
            nl_window=self.nl_window,
            cv_mu=self.cv_mu,
            cv_max_iter=self.cv_max_iter,
            mask_margin=self.mask_margin,
            blend_scale=self.blend_scale,
        )


@dataclass
class GenerateSection:
    patch_size: int = 512
    count_mean: float = 10.0
    n_patches: int = 100
    max_place_attempts: int = 30
    dish_inset_frac: float = 0.05
    seed: int = 0
    scale_augment: bool = False
    scale_min: float = 0.8
    scale_max: float = 1.2
    species_weights: dict = field(default_factory=lambda: {name: 1.0 for name in SPECIES})


@dataclass
class StylizeSection:
    mode: str = "raw"
    lambda_style: float = 0.05
    strength_semi: float = 0.4
    strength_full: float = 0.8
    bridge_jobs: int = 1


@dataclass
class EvaluateSection:
    score_thresh: float = 0.5
    count_per_class: bool = False


@dataclass
class PipelineConfig:
    extract: ExtractSection = field(default_factory=ExtractSection)
    generate: GenerateSection = field(default_factory=GenerateSection)
    stylize: StylizeSection = field(default_factory=StylizeSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "extract": ExtractSection,
    "generate": GenerateSection,
    "stylize": StylizeSection,
    "evaluate": EvaluateSection,
}


def _coerce(section: str, key: str, value, target_type):
    if target_type is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if target_type in (int, float, bool, str) and not isinstance(value, target_type):
        raise ConfigError(f"[{section}] {key} = {value!r}: expected {target_type.__name__}")
    if target_type is int and isinstance(value, bool):
        raise ConfigError(f"[{section}] {key}: expected int, got bool")
    return value


def load_config(path=None) -> PipelineConfig:
    """Load and validate a TOML config; unknown sections or keys are errors."""
    cfg = PipelineConfig()
    if path is None:
        return cfg
    try:
        with open(path, "rb") as f:
            raw = tomli.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")

    for section_name, content in raw.items():
        if section_name not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section_name}]")
        if not isinstance(content, dict):
            raise ConfigError(f"[{section_name}] must be a table")
        target = getattr(cfg, section_name)
        valid = {f.name: f.type for f in fields(target)}
        for key, value in content.items():
            if key not in valid:
                raise ConfigError(f"unknown key '{key}' in section [{section_name}]")
            current = getattr(target, key)
            if key == "species_weights":
                if not isinstance(value, dict):
                    raise ConfigError("[generate] species_weights must be a table")
                unknown = set(value) - set(SPECIES)
                if unknown:
                    raise ConfigError(f"unknown species in weights: {sorted(unknown)}")
                weights = dict(current)
                weights.update({k: float(v) for k, v in value.items()})
                setattr(target, key, weights)
            else:
                setattr(target, key, _coerce(section_name, key, value, type(current)))
    _validate(cfg, path)
    return cfg


def _validate(cfg: PipelineConfig, path) -> None:
    g = cfg.generate
    if g.count_mean <= 0:
        raise ConfigError("[generate] count_mean must be > 0")
    if g.patch_size < 16:
        raise ConfigError("[generate] patch_size must be >= 16")
    if any(w < 0 for w in g.species_weights.values()) or not any(
        w > 0 for w in g.species_weights.values()
    ):
        raise ConfigError("[generate] species weights must be nonnegative, not all zero")
    if cfg.stylize.mode not in ("raw", "semi", "full", "external"):
        raise ConfigError(f"[stylize] unknown mode '{cfg.stylize.mode}'")
    if not 0.0 <= cfg.stylize.lambda_style <= 1.0:
        raise ConfigError("[stylize] lambda_style must be in [0, 1]")
    if not 0.0 <= cfg.evaluate.score_thresh <= 1.0:
        raise ConfigError("[evaluate] score_thresh must be in [0, 1]")
    if not 0 < cfg.extract.overlap_threshold < 1:
        raise ConfigError("[extract] overlap_threshold must be in (0, 1)")
    del path
