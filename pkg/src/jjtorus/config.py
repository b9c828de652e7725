"""Run configuration: defaults, flat key=value files, command-line overrides."""

from dataclasses import dataclass, fields, replace
import os

CACHE_ENV = "JJTORUS_CACHE_DIR"


@dataclass(frozen=True)
class RunConfig:
    tol: float = 1e-11              # integrator relative tolerance
    threads: int = 1
    cache_dir: str = ""
    format: str = "json"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.format not in ("csv", "json", "svg"):
            raise ValueError(f"unknown format {self.format!r}")

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None and k in _NAMES}
        return replace(self, **kw)


_NAMES = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text):
    """Parse 'key = value' lines; '#' starts a comment.  Unknown keys are errors."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _NAMES:
            raise ValueError(f"line {n}: unknown key {key!r}")
        out[key] = _NAMES[key](value)
    return out


def load_config(path=None, **overrides):
    """Defaults, then the file at ``path``, then the environment cache dir, then overrides."""
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    if not values.get("cache_dir") and os.environ.get(CACHE_ENV):
        values["cache_dir"] = os.environ[CACHE_ENV]
    return RunConfig(**values).with_overrides(**overrides)
