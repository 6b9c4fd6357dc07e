"""Flat key=value pipeline configuration with CLI overrides.

Unknown keys are rejected and every module's invariants are enforced at load
time, so a bad file fails before any image is touched.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .extraction import MERGE_MODES, ExtractConfig
from .occlusion import DIRECTIONS, MODES
from .proposals import ProposeConfig


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_str_list(raw: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


_PARSERS = {int: int, float: float, bool: _parse_bool, str: lambda s: s.strip(), tuple: _parse_str_list}

# key -> (type, default)
SCHEMA: dict[str, tuple[type, object]] = {
    "synth.count": (int, 12),
    "synth.canvas_width": (int, 640),
    "synth.canvas_height": (int, 480),
    "synth.n_min": (int, 1),
    "synth.n_max": (int, 5),
    "synth.min_gap": (int, 20),
    "synth.noise": (int, 0),
    "synth.train_crops_per_category": (int, 8),
    "propose.scale": (float, 200.0),
    "propose.min_segment_size": (int, 50),
    "propose.use_color": (bool, True),
    "propose.use_texture": (bool, True),
    "propose.use_size": (bool, True),
    "propose.use_fill": (bool, True),
    "resize.enabled": (bool, False),
    "resize.target_long_side": (int, 640),
    "extract.initial_iou_threshold": (float, 0.1),
    "extract.area_min": (int, 500),
    "extract.aspect_max": (float, 4.0),
    "extract.iou_threshold_max": (float, 0.95),
    "extract.max_iterations": (int, 100),
    "extract.merge_mode": (str, "union"),
    "extract.area_max_frac": (float, 0.9),
    "confirm.mode": (str, "multi"),  # multi | all | off
    "confirm.score_threshold": (float, 0.8),
    "confirm.temperature": (float, 20.0),
    "confirm.keep_partial": (bool, False),
    "occlude.modes": (tuple, ("black", "patch")),
    "occlude.directions": (tuple, ("left", "right", "up", "down")),
    "occlude.coverage_min": (float, 0.2),
    "occlude.coverage_max": (float, 0.5),
    "eval.iou_threshold": (float, 0.5),
    "eval.score_suppress": (float, -1.0),  # negative disables the filter
    "eval.figures": (bool, True),
}

CONFIRM_MODES = ("multi", "all", "off")


@dataclass
class PipelineConfig:
    values: dict[str, object]

    def __getitem__(self, key: str):
        return self.values[key]

    def propose_config(self) -> ProposeConfig:
        return ProposeConfig(
            scale=self.values["propose.scale"],
            min_segment_size=self.values["propose.min_segment_size"],
            use_color=self.values["propose.use_color"],
            use_texture=self.values["propose.use_texture"],
            use_size=self.values["propose.use_size"],
            use_fill=self.values["propose.use_fill"],
        )

    def extract_config(self) -> ExtractConfig:
        frac = self.values["extract.area_max_frac"]
        return ExtractConfig(
            initial_iou_threshold=self.values["extract.initial_iou_threshold"],
            area_min=self.values["extract.area_min"],
            aspect_max=self.values["extract.aspect_max"],
            iou_threshold_max=self.values["extract.iou_threshold_max"],
            max_iterations=self.values["extract.max_iterations"],
            merge_mode=self.values["extract.merge_mode"],
            area_max_frac=None if frac >= 1.0 else frac,
        )

    def score_suppress(self) -> float | None:
        raw = self.values["eval.score_suppress"]
        return None if raw < 0 else raw


def _validate(values: dict[str, object]) -> None:
    try:
        cfg = PipelineConfig(values)
        cfg.propose_config()
        cfg.extract_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if values["synth.n_min"] < 1 or values["synth.n_max"] < values["synth.n_min"]:
        raise ConfigError("need 1 <= synth.n_min <= synth.n_max")
    if values["synth.count"] < 1:
        raise ConfigError("synth.count must be >= 1")
    if values["synth.min_gap"] < 0:
        raise ConfigError("synth.min_gap must be >= 0")
    if values["confirm.mode"] not in CONFIRM_MODES:
        raise ConfigError(f"confirm.mode must be one of {CONFIRM_MODES}")
    if not (0.0 <= values["confirm.score_threshold"] <= 1.0):
        raise ConfigError("confirm.score_threshold must be in [0, 1]")
    if values["confirm.temperature"] <= 0:
        raise ConfigError("confirm.temperature must be positive")
    for mode in values["occlude.modes"]:
        if mode not in MODES:
            raise ConfigError(f"unknown occlusion mode {mode!r}")
    for direction in values["occlude.directions"]:
        if direction not in DIRECTIONS:
            raise ConfigError(f"unknown occlusion direction {direction!r}")
    if not values["occlude.modes"] or not values["occlude.directions"]:
        raise ConfigError("occlude.modes and occlude.directions must be non-empty")
    cov_min, cov_max = values["occlude.coverage_min"], values["occlude.coverage_max"]
    if not (0.0 < cov_min <= cov_max <= 1.0):
        raise ConfigError("need 0 < occlude.coverage_min <= occlude.coverage_max <= 1")
    if not (0.0 < values["eval.iou_threshold"] < 1.0):
        raise ConfigError("eval.iou_threshold must be in (0, 1)")
    if values["resize.target_long_side"] < 1:
        raise ConfigError("resize.target_long_side must be >= 1")
    if values["extract.merge_mode"] not in MERGE_MODES:
        raise ConfigError(f"extract.merge_mode must be one of {MERGE_MODES}")


def _set_value(values: dict[str, object], key: str, raw: str, where: str) -> None:
    if key not in SCHEMA:
        raise ConfigError(f"{where}: unknown key {key!r}")
    typ, _ = SCHEMA[key]
    try:
        values[key] = _PARSERS[typ](raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {raw!r} ({exc})") from exc


def load_config(path=None, overrides: list[str] | None = None) -> PipelineConfig:
    """Read defaults, then the config file, then --set overrides; validate."""
    values = {key: default for key, (_, default) in SCHEMA.items()}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = stripped.split("=", 1)
                _set_value(values, key.strip(), raw, f"{path}:{lineno}")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        _set_value(values, key.strip(), raw, f"--set {key.strip()}")
    _validate(values)
    return PipelineConfig(values)
