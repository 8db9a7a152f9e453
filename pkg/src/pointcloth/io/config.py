"""Flat ``section.key = value`` configuration with typed defaults."""
from __future__ import annotations

from pathlib import Path

DEFAULTS = {
    "data.seed": 0,
    "data.outfits": 16,
    "data.frames": 200,
    "data.stride": 10,
    "data.key_every": 25,
    "data.points": 8192,
    "model.seed": 0,
    "model.code_dim": 8,
    "model.encoder_width": 512,
    "model.encoder_layers": 5,
    "model.trunk_widths": "64,128,256",
    "model.head_widths": "256,128",
    "train.steps": 2000,
    "train.batch": 8,
    "train.lr_code": 1e-2,
    "train.lr_net": 1e-3,
    "train.sample_points": 512,
    "train.checkpoint_every": 5,
    "fit.T": 4,
    "fit.warmup_steps": 100,
    "fit.refine_min": 50,
    "fit.refine_max": 400,
    "fit.tol": 1e-4,
    "fit.window": 20,
    "fit.lr": 0.02,
    "fit.points": 2048,
    "fit.init_radius": 0.5,
    "render.points": 8192,
    "appearance.steps": 2000,
    "appearance.lr_descriptors": 3e-4,
    "appearance.lr_head": 1e-2,
    "appearance.p": 8,
    "eval.emd_points": 1024,
}


class ConfigError(ValueError):
    pass


class Config:
    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key, value, where: str = "") -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"{where}unknown key {key!r}")
        kind = type(DEFAULTS[key])
        try:
            if kind is int:
                if isinstance(value, str):
                    value = int(value.strip())
                elif int(value) != value:
                    raise ValueError
                value = int(value)
            elif kind is float:
                value = float(value)
            else:
                value = str(value).strip()
        except (TypeError, ValueError):
            raise ConfigError(f"{where}{key}: expected {kind.__name__}, got {value!r}") from None
        self.values[key] = value

    def __getitem__(self, key):
        return self.values[key]

    def section(self, prefix: str) -> dict:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def int_list(self, key) -> tuple:
        try:
            return tuple(int(x) for x in self.values[key].split(","))
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated integers") from None


def parse_config(text: str, source: str = "<config>") -> Config:
    cfg = Config()
    seen = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{n}: key {key!r} already set on line {seen[key]}")
        seen[key] = n
        cfg.set(key, value, f"{source}:{n}: ")
    return cfg


def load_config(path) -> Config:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    return parse_config(text, str(path))


def format_defaults() -> str:
    return "\n".join(f"{k} = {v}" for k, v in DEFAULTS.items()) + "\n"
