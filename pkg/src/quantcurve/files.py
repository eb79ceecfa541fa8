"""Config parsing, CSV ingestion and atomic output writing."""

from __future__ import annotations

import csv
import enum
import math
import os
import tempfile
from collections import defaultdict
from pathlib import Path

import numpy as np

from .estimator import Sample


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DataError(ValueError):
    """Malformed input data file."""


# ---------------------------------------------------------------------------
# key=value config


def parse_config_text(text: str) -> dict[str, list[str]]:
    """Flat ``key = value`` lines; repeated keys accumulate into lists.

    Blank lines and lines starting with ``#`` are ignored.
    """
    out: dict[str, list[str]] = defaultdict(list)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        out[key].append(value.strip())
    return dict(out)


def read_config(path) -> dict[str, list[str]]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


def apply_overrides(cfg: dict[str, list[str]], overrides) -> dict[str, list[str]]:
    """``--set key=value`` overrides replace every value of ``key``."""
    cfg = {k: list(v) for k, v in cfg.items()}
    replaced = set()
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in replaced:
            cfg[key] = []
            replaced.add(key)
        cfg[key].append(value)
    return cfg


class Config:
    """Typed accessors over a parsed key=value mapping."""

    def __init__(self, raw: dict[str, list[str]]):
        self.raw = raw

    def has(self, key):
        return key in self.raw and len(self.raw[key]) > 0

    def one(self, key, default=None, required=False):
        vals = self.raw.get(key, [])
        if not vals:
            if required:
                raise ConfigError(key, "missing required key")
            return default
        if len(vals) > 1:
            raise ConfigError(key, f"expected a single value, got {len(vals)}")
        return vals[0]

    def many(self, key):
        return list(self.raw.get(key, []))

    def _convert(self, key, value, kind):
        try:
            out = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(key, f"cannot parse {value!r} as {kind.__name__}") from None
        if kind is float and not math.isfinite(out):
            raise ConfigError(key, f"value must be finite, got {value!r}")
        return out

    def int(self, key, default=None, required=False):
        v = self.one(key, None, required)
        return default if v is None else self._convert(key, v, int)

    def float(self, key, default=None, required=False):
        v = self.one(key, None, required)
        return default if v is None else self._convert(key, v, float)

    def bool(self, key, default=False):
        v = self.one(key)
        if v is None:
            return default
        low = v.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {v!r}")

    def floats(self, key):
        return [self._convert(key, v, float) for v in self.many(key)]

    def ints(self, key):
        return [self._convert(key, v, int) for v in self.many(key)]

    def vectors(self, key):
        """Each value is a comma-separated vector."""
        return [tuple(self._convert(key, c, float) for c in v.split(",")) for v in self.many(key)]


# ---------------------------------------------------------------------------
# numbers and atomic writes


def fmt(value) -> str:
    """17 significant digits, round-trip safe for float64."""
    if value is None:
        return ""
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def atomic_write_text(path, text: str):
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(header: list[str], rows, comments=()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# sample CSV


def ingest_csv(path) -> Sample:
    """Read ``x1,...,xd,y`` (header required) into a :class:`Sample`.

    Data rows are numbered from 1 (the header is not counted).
    """
    p = Path(path)
    if not p.is_file():
        raise DataError(f"input file not found: {p}")
    with p.open(encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DataError(f"{p}: missing header row (file is empty)")
    reader = csv.reader(lines)
    header = [c.strip() for c in next(reader)]
    d = len(header) - 1
    expected = [f"x{j}" for j in range(1, d + 1)] + ["y"]
    if _all_numeric(header):
        raise DataError(f"{p}: missing header row (first line is numeric data)")
    if d < 1 or header != expected:
        raise DataError(f"{p}: header must be x1,...,xd,y in order (got {','.join(header)})")
    rows = []
    for i, rec in enumerate(reader, start=1):
        if len(rec) != d + 1:
            raise DataError(f"{p}: ragged row {i}: expected {d + 1} fields, got {len(rec)}")
        vals = []
        for j, cell in enumerate(rec):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{p}: row {i}, column {header[j]}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{p}: row {i}, column {header[j]}: non-finite value {cell!r}")
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise DataError(f"{p}: no data rows")
    arr = np.array(rows, dtype=float)
    return Sample(arr[:, :d], arr[:, d])


def _all_numeric(cells) -> bool:
    try:
        [float(c) for c in cells]
    except ValueError:
        return False
    return True


def sample_csv_text(sample: Sample) -> str:
    header = [f"x{j}" for j in range(1, sample.d + 1)] + ["y"]
    rows = (list(sample.x[i]) + [sample.y[i]] for i in range(sample.n))
    return render_csv(header, rows)


def write_sample_csv(path, sample: Sample):
    atomic_write_text(path, sample_csv_text(sample))
