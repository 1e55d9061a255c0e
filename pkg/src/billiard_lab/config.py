"""Flat text configuration for tables and experiment runs.

Format: one ``key = value`` per line, values as JSON fragments, ``#``
comments (quote-aware).  Obstacles use dotted keys ``obstacleN.field``
with N counting from 1.  Unknown keys are rejected rather than ignored
so typos fail loudly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (DeformationFamily, GeometryError, ObstacleSpec,
                       validate_family)
from .symbolic import TOL_ORBIT, Word, is_admissible, sample_itinerary


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


_TOP_KEYS = {"mode", "alpha_max", "smoothness", "words", "alpha_grid",
             "tol_orbit", "padding", "burn_in", "h_fd", "phi_max", "seed",
             "output_dir"}
_OBSTACLE_KEYS = {"kind", "center_x", "center_y", "radius", "semi_axis_a",
                  "semi_axis_b", "rotation"}


@dataclass(frozen=True)
class LabConfig:
    family: DeformationFamily
    words: tuple[tuple[str, Word], ...]   # (identifier, word) pairs
    alpha_grid: np.ndarray
    tol_orbit: float = TOL_ORBIT
    padding: int = 12
    burn_in: int = 10
    h_fd: float = 1e-6
    phi_max: float | None = None
    seed: int = 0
    output_dir: str = "results"
    extras: dict = field(default_factory=dict)


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    esc = False
    for ch in line:
        if in_str:
            out.append(ch)
            if esc:
                esc = False
            elif ch == "\\":
                esc = True
            elif ch == '"':
                in_str = False
        else:
            if ch == "#":
                break
            out.append(ch)
            if ch == '"':
                in_str = True
    return "".join(out)


def _parse_lines(text: str) -> dict:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            entries[key] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"line {lineno}: value for {key!r} is not valid JSON: {exc}") \
                from exc
    return entries


def _split_keys(entries: dict):
    top = {}
    obstacles = {}
    for key, value in entries.items():
        if key.startswith("obstacle"):
            head, dot, fld = key.partition(".")
            idx_text = head[len("obstacle"):]
            if not dot or not idx_text.isdigit():
                raise ConfigError(f"bad obstacle key {key!r}")
            idx = int(idx_text)
            if fld not in _OBSTACLE_KEYS:
                raise ConfigError(f"unknown obstacle field {key!r}")
            obstacles.setdefault(idx, {})[fld] = value
        elif key in _TOP_KEYS:
            top[key] = value
        else:
            raise ConfigError(f"unknown key {key!r}")
    return top, obstacles


def _poly(value, key):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (float(value),)
    if isinstance(value, list) and value \
            and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                    for v in value):
        return tuple(float(v) for v in value)
    raise ConfigError(f"{key} must be a number or a nonempty number list")


def _build_obstacle(idx: int, fields: dict) -> ObstacleSpec:
    kind = fields.get("kind")
    if kind not in ("circle", "ellipse"):
        raise ConfigError(f"obstacle{idx}.kind must be \"circle\" or \"ellipse\"")
    need = {"circle": {"center_x", "center_y", "radius"},
            "ellipse": {"center_x", "center_y", "semi_axis_a", "semi_axis_b"}}
    allowed = need[kind] | ({"rotation"} if kind == "ellipse" else set())
    missing = need[kind] - fields.keys()
    if missing:
        raise ConfigError(f"obstacle{idx} missing fields: {sorted(missing)}")
    extra = fields.keys() - allowed - {"kind"}
    if extra:
        raise ConfigError(f"obstacle{idx} has fields {sorted(extra)} "
                          f"not valid for kind {kind!r}")
    polys = {f: _poly(v, f"obstacle{idx}.{f}") for f, v in fields.items()
             if f != "kind"}
    if kind == "circle":
        return ObstacleSpec("circle", polys["center_x"], polys["center_y"],
                            radius=polys["radius"])
    return ObstacleSpec("ellipse", polys["center_x"], polys["center_y"],
                        semi_axis_a=polys["semi_axis_a"],
                        semi_axis_b=polys["semi_axis_b"],
                        rotation=polys.get("rotation", (0.0,)))


def _expand_words(raw, z0: int, default_seed: int):
    if not isinstance(raw, list) or not raw \
            or not all(isinstance(w, str) for w in raw):
        raise ConfigError("words must be a nonempty list of strings")
    out = []
    for text in raw:
        text = text.strip()
        if text.startswith("sample:"):
            parts = text.split(":")[1:]
            if len(parts) == 2:
                parts.append(str(default_seed))
            if len(parts) != 3:
                raise ConfigError(f"bad sample spec {text!r}; "
                                  "expected sample:count:length[:seed]")
            try:
                count, length, seed = (int(p) for p in parts)
            except ValueError as exc:
                raise ConfigError(f"bad sample spec {text!r}") from exc
            if count < 1 or length < 2:
                raise ConfigError(f"sample spec {text!r} needs count >= 1, "
                                  "length >= 2")
            for i in range(count):
                word = sample_itinerary(z0, length, seed + i)
                out.append((f"sample:{length}:{seed + i}", word))
        else:
            try:
                word = Word.parse(text)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            out.append((word.label.replace(",", "-"), word))
    ids = [ident for ident, _ in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("word list expands to duplicate identifiers")
    for ident, word in out:
        try:
            ok = is_admissible(word, z0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not ok:
            raise ConfigError(f"word {ident} repeats a symbol consecutively")
    return tuple(out)


def load_config(path, *, validate: bool = True) -> LabConfig:
    """Parse, build the family, and (by default) certify it admissible."""
    text = Path(path).read_text()
    entries = _parse_lines(text)
    top, obstacle_fields = _split_keys(entries)

    for key in ("mode", "alpha_max", "words", "alpha_grid"):
        if key not in top:
            raise ConfigError(f"missing required key {key!r}")
    if not obstacle_fields:
        raise ConfigError("no obstacles defined")
    indices = sorted(obstacle_fields)
    if indices != list(range(1, len(indices) + 1)):
        raise ConfigError(
            f"obstacle indices must be 1..{len(indices)}, got {indices}")

    smoothness = top.get("smoothness", [5, 3])
    if not (isinstance(smoothness, list) and len(smoothness) == 2
            and all(isinstance(v, int) for v in smoothness)):
        raise ConfigError("smoothness must be a [r, r'] integer pair")
    alpha_max = top["alpha_max"]
    if not isinstance(alpha_max, (int, float)) or isinstance(alpha_max, bool) \
            or not alpha_max > 0:
        raise ConfigError("alpha_max must be a positive number")

    obstacles = tuple(_build_obstacle(i, obstacle_fields[i]) for i in indices)
    try:
        family = DeformationFamily(obstacles, float(alpha_max),
                                   tuple(smoothness), top["mode"])
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc

    grid_spec = top["alpha_grid"]
    if not (isinstance(grid_spec, list) and len(grid_spec) == 3):
        raise ConfigError("alpha_grid must be [start, stop, count]")
    start, stop, count = grid_spec
    if not isinstance(count, int) or count < 1:
        raise ConfigError("alpha_grid count must be a positive integer")
    if not 0.0 <= start <= stop <= family.alpha_max:
        raise ConfigError("alpha_grid must satisfy "
                          "0 <= start <= stop <= alpha_max")
    grid = np.linspace(float(start), float(stop), count)

    seed = top.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    words = _expand_words(top["words"], family.z0, seed)

    tol_orbit = float(top.get("tol_orbit", TOL_ORBIT))
    if not 0.0 < tol_orbit <= 1e-6:
        raise ConfigError("tol_orbit must lie in (0, 1e-6]")
    padding = top.get("padding", 12)
    if not isinstance(padding, int) or padding < 1:
        raise ConfigError("padding must be a positive integer")
    burn_in = top.get("burn_in", 10)
    if not isinstance(burn_in, int) or burn_in < 0:
        raise ConfigError("burn_in must be a nonnegative integer")
    h_fd = float(top.get("h_fd", 1e-6))
    if not 1e-7 <= h_fd <= 1e-4:
        raise ConfigError("h_fd must lie in [1e-7, 1e-4]")
    phi_max = top.get("phi_max")
    if phi_max is not None:
        phi_max = float(phi_max)
        if not 0.0 <= phi_max < math.pi / 2:
            raise ConfigError("phi_max must lie in [0, pi/2)")
    output_dir = top.get("output_dir", "results")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a nonempty string")

    if validate:
        validate_family(family)

    return LabConfig(family, words, grid, tol_orbit, padding, burn_in, h_fd,
                     phi_max, seed, output_dir)
