"""Scenario files: YAML mirroring :class:`ScenarioConfig` field for field."""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path

import yaml

from rangeloc.sim import MotionModel, ScenarioConfig, TargetConfig

PRESETS = ("fig2", "fig3", "fig45", "fig8", "fig10-11")


class ConfigError(ValueError):
    """Invalid scenario; the message names the file, line and field where known."""


_TOP_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}
_TARGET_FIELDS = {f.name for f in dataclasses.fields(TargetConfig)}
_MOTION_FIELDS = {f.name for f in dataclasses.fields(MotionModel)}


def _key_lines(node, prefix="") -> dict[str, int]:
    """Map dotted key paths to 1-based source lines."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}{key.value}"
            lines[path] = key.start_mark.line + 1
            lines.update(_key_lines(value, path + "."))
    elif isinstance(node, yaml.SequenceNode):
        for k, item in enumerate(node.value):
            path = f"{prefix[:-1]}[{k}]."
            lines[path[:-1]] = item.start_mark.line + 1
            lines.update(_key_lines(item, path))
    return lines


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _check_keys(data: dict, allowed: set[str], where: str, fail) -> None:
    if not isinstance(data, dict):
        fail(where.rstrip(".") or "<root>", "expected a mapping")
    for key in data:
        if key not in allowed:
            fail(f"{where}{key}", "unknown key")


def scenario_from_dict(data: dict, source: str = "<scenario>", lines: dict[str, int] | None = None) -> ScenarioConfig:
    lines = lines or {}

    def fail(path: str, msg: str):
        line = lines.get(path)
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: {path}: {msg}")

    _check_keys(data, _TOP_FIELDS, "", fail)
    kwargs = {k: _tuplify(v) for k, v in data.items() if k != "targets"}
    if "targets" in data:
        if not isinstance(data["targets"], list):
            fail("targets", "expected a list")
        targets = []
        for k, item in enumerate(data["targets"]):
            where = f"targets[{k}]."
            _check_keys(item, _TARGET_FIELDS, where, fail)
            if "position" not in item:
                fail(f"targets[{k}]", "missing position")
            motion = item.get("motion", {}) or {}
            _check_keys(motion, _MOTION_FIELDS, where + "motion.", fail)
            try:
                model = MotionModel(**{key: _tuplify(v) for key, v in motion.items()})
            except (TypeError, ValueError) as exc:
                fail(f"targets[{k}].motion", str(exc))
            targets.append(TargetConfig(tuple(float(c) for c in item["position"]), model))
        kwargs["targets"] = tuple(targets)
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        first = str(exc).split(";")[0]
        field = first.split(":")[0].split("/")[0].strip()
        line = lines.get(field)
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{loc}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    return scenario_from_dict(data, source, _key_lines(node))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("rangeloc").joinpath("presets", f"{name}.yaml").read_text()


def load_scenario(source: str | Path) -> ScenarioConfig:
    """Load a scenario from a file path, or by preset name."""
    path = Path(source)
    if path.is_file():
        return parse_scenario(path.read_text(), str(path))
    if str(source) in PRESETS:
        return parse_scenario(preset_text(str(source)), f"preset:{source}")
    raise ConfigError(f"{source}: scenario file not found")


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    def plain(value):
        if isinstance(value, tuple):
            return [plain(v) for v in value]
        if hasattr(value, "value") and isinstance(value.value, str):
            return value.value
        return value

    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "targets":
            out["targets"] = [{"position": list(t.position),
                               "motion": {m.name: plain(getattr(t.motion, m.name))
                                          for m in dataclasses.fields(t.motion)}} for t in value]
        else:
            out[f.name] = plain(value)
    return out


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)
