"""Dotted parameter names, the flat ``key = value`` config file, and the config digest.

Every field of SystemConfig has a dotted name, e.g. ``source.mu`` or
``heralding.detector2.efficiency``.  A few group names set every member at
once (``heralding.deadtime_s``, ``receiver.deadtime_s``, ...); they are
what sweeps use as axes.

A config file is plain ``key = value`` lines, ``#`` comments allowed.  An
optional ``profile = <name>`` line picks the base profile (default
``paper-default``); all other keys override it.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import replace
from pathlib import Path
from typing import Any

from .model import (PROFILES, ConfigError, DetectorParams, PairDistribution, SystemConfig, db_to_transmittance,
                    psm_heralding, validate_config)

DETECTOR_FIELDS = ("efficiency", "deadtime_s", "dark_prob", "afterpulse_amplitude", "afterpulse_tau_s")
_GROUP_HERALD = {f"heralding.{f}" for f in DETECTOR_FIELDS}
_GROUP_RX = {f"receiver.{f}" for f in DETECTOR_FIELDS}

_SCALARS = {
    "seed": int,
    "n_slots": int,
    "source.mu": float,
    "source.clock_rate_hz": float,
    "source.pair_distribution": str,
    "heralding.m": int,
    "heralding.arm_transmittance": tuple,
    "heralding.xor_deadtime_s": float,
    "heralding.split_excess_loss_db": float,
    "receiver.channel_transmittance": float,
    "receiver.noise_prob_per_gate": float,
    "receiver.hbt_split": float,
    "receiver.triggered": bool,
}


def _detector_key(key: str) -> tuple[str, int, str] | None:
    """('heralding', index, field) or ('receiver', 3|4, field) for per-detector keys."""
    parts = key.split(".")
    if len(parts) != 3 or not parts[1].startswith("detector") or parts[2] not in DETECTOR_FIELDS:
        return None
    try:
        idx = int(parts[1][len("detector"):])
    except ValueError:
        return None
    if parts[0] == "heralding" and 1 <= idx:
        return "heralding", idx, parts[2]
    if parts[0] == "receiver" and idx in (3, 4):
        return "receiver", idx, parts[2]
    return None


def is_known_key(key: str, cfg: SystemConfig | None = None) -> bool:
    if key in _SCALARS or key in _GROUP_HERALD or key in _GROUP_RX:
        return True
    d = _detector_key(key)
    if d is None:
        return False
    return d[0] == "receiver" or cfg is None or d[1] <= cfg.heralding.m


def _coerce(key: str, value: Any, kind) -> Any:
    if not isinstance(value, str):
        if kind is tuple:
            return tuple(float(v) for v in value)
        if kind is bool:
            return bool(value)
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{key} must be an integer, got {value!r}")
            return int(value)
        return kind(value)
    text = value.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind is tuple:
            return tuple(float(v) for v in text.replace("[", "").replace("]", "").split(",") if v.strip())
        if kind is int:
            f = float(text)
            if not f.is_integer():
                raise ValueError(text)
            return int(text) if text.lstrip("-").isdigit() else int(f)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None


def get_param(cfg: SystemConfig, key: str) -> Any:
    if key in ("seed", "n_slots"):
        return getattr(cfg, key)
    if key in _SCALARS:
        section, name = key.split(".")
        v = getattr(getattr(cfg, section), name)
        return v.value if isinstance(v, PairDistribution) else v
    if key in _GROUP_HERALD:
        vals = {getattr(d, key.split(".")[1]) for d in cfg.heralding.detectors}
        if len(vals) != 1:
            raise ConfigError(f"{key}: heralding detectors differ, use heralding.detectorN.*")
        return vals.pop()
    if key in _GROUP_RX:
        f = key.split(".")[1]
        a, b = getattr(cfg.receiver.detector3, f), getattr(cfg.receiver.detector4, f)
        if a != b:
            raise ConfigError(f"{key}: receiver detectors differ, use receiver.detector3/4.*")
        return a
    d = _detector_key(key)
    if d is None:
        raise ConfigError(f"unknown parameter {key!r}")
    section, idx, f = d
    if section == "heralding":
        if idx > cfg.heralding.m:
            raise ConfigError(f"unknown parameter {key!r} (m = {cfg.heralding.m})")
        return getattr(cfg.heralding.detectors[idx - 1], f)
    return getattr(getattr(cfg.receiver, f"detector{idx}"), f)


def _set_det(det: DetectorParams, f: str, value: float) -> DetectorParams:
    return replace(det, **{f: float(value)}, deadtime_slots=None)


def set_param(cfg: SystemConfig, key: str, value: Any) -> SystemConfig:
    """Return a copy of ``cfg`` with ``key`` set.  Strings are parsed.

    ``heralding.m`` rebuilds an even split of the current total
    transmittance over copies of detector 1.  ``heralding.split_excess_loss_db``
    rescales the arm transmittances by the change in loss.
    """
    if key in _SCALARS:
        v = _coerce(key, value, _SCALARS[key])
        if key in ("seed", "n_slots"):
            return replace(cfg, **{key: v})
        section, name = key.split(".")
        her = cfg.heralding
        if key == "heralding.m":
            if v < 1:
                raise ConfigError(f"m must be an integer >= 1, got {v!r}")
            total = sum(her.arm_transmittance) * 10.0 ** (her.split_excess_loss_db / 10.0)
            return replace(cfg, heralding=psm_heralding(min(total, 1.0), v, her.detectors[0],
                                                        excess_loss_db=her.split_excess_loss_db,
                                                        xor_deadtime_s=her.xor_deadtime_s))
        if key == "heralding.split_excess_loss_db":
            scale = db_to_transmittance(v - her.split_excess_loss_db)
            return replace(cfg, heralding=replace(her, split_excess_loss_db=v,
                                                  arm_transmittance=tuple(t * scale for t in her.arm_transmittance)))
        if key == "source.pair_distribution":
            try:
                v = PairDistribution(v)
            except ValueError:
                raise ConfigError(f"{key} must be one of {[d.value for d in PairDistribution]}, got {v!r}") from None
        sub = getattr(cfg, section)
        return replace(cfg, **{section: replace(sub, **{name: v})})
    if key in _GROUP_HERALD:
        v = _coerce(key, value, float)
        f = key.split(".")[1]
        dets = tuple(_set_det(d, f, v) for d in cfg.heralding.detectors)
        return replace(cfg, heralding=replace(cfg.heralding, detectors=dets))
    if key in _GROUP_RX:
        v = _coerce(key, value, float)
        f = key.split(".")[1]
        rx = cfg.receiver
        return replace(cfg, receiver=replace(rx, detector3=_set_det(rx.detector3, f, v),
                                             detector4=_set_det(rx.detector4, f, v)))
    d = _detector_key(key)
    if d is None:
        raise ConfigError(f"unknown parameter {key!r}")
    section, idx, f = d
    v = _coerce(key, value, float)
    if section == "heralding":
        her = cfg.heralding
        if idx > her.m:
            raise ConfigError(f"unknown parameter {key!r} (m = {her.m})")
        dets = list(her.detectors)
        dets[idx - 1] = _set_det(dets[idx - 1], f, v)
        return replace(cfg, heralding=replace(her, detectors=tuple(dets)))
    rx = cfg.receiver
    name = f"detector{idx}"
    return replace(cfg, receiver=replace(rx, **{name: _set_det(getattr(rx, name), f, v)}))


def flatten(cfg: SystemConfig) -> dict[str, Any]:
    """Every concrete key of ``cfg`` (no group aliases), in a fixed order."""
    out: dict[str, Any] = {}
    for key in _SCALARS:
        v = get_param(cfg, key)
        out[key] = list(v) if isinstance(v, tuple) else v
    for i in range(cfg.heralding.m):
        for f in DETECTOR_FIELDS:
            out[f"heralding.detector{i + 1}.{f}"] = get_param(cfg, f"heralding.detector{i + 1}.{f}")
    for j in (3, 4):
        for f in DETECTOR_FIELDS:
            out[f"receiver.detector{j}.{f}"] = get_param(cfg, f"receiver.detector{j}.{f}")
    return out


def config_from_mapping(items: dict[str, Any], *, profile: str = "paper-default") -> SystemConfig:
    """Build a validated config from a profile plus key overrides.

    ``heralding.m`` is applied first so that per-detector keys can refer
    to the new arms, then ``heralding.split_excess_loss_db``, so that an
    explicit ``heralding.arm_transmittance`` always wins.
    """
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; valid: {sorted(PROFILES)}")
    cfg = PROFILES[profile]()
    first = {"heralding.m": 0, "heralding.split_excess_loss_db": 1}
    ordered = sorted(items.items(), key=lambda kv: first.get(kv[0], 2))
    for key, value in ordered:
        if not is_known_key(key):
            raise ConfigError(f"unknown config key {key!r}")
        cfg = set_param(cfg, key, value)
    return validate_config(cfg)


def parse_config_text(text: str) -> SystemConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    items = dict(parser["config"])
    profile = items.pop("profile", "paper-default").strip()
    return config_from_mapping(items, profile=profile)


def load_config(path: str | Path) -> SystemConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def dump_config(cfg: SystemConfig) -> str:
    """Config file text that ``parse_config_text`` turns back into ``cfg``."""
    lines = []
    for key, v in flatten(cfg).items():
        if isinstance(v, list):
            v = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def config_digest(cfg: SystemConfig) -> str:
    """sha256 of the canonical JSON of the validated config (seed and n_slots included)."""
    cfg = validate_config(cfg)
    flat = flatten(cfg)
    blob = json.dumps(flat, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
