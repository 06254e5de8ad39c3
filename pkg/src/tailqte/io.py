"""CSV ingestion and emission, run manifests, and the NSW-shaped fixture.

Generic input schema: columns ``y`` (float), ``d`` (0/1), and either ``e``
(score in (0,1)) or covariate columns.  The NSW schema expects the raw
program columns (age, education, earn1974, earn1975, married, black,
hispanic, u74) alongside y and d; common aliases from the public data
files (treat, re74, re75, re78, educ) are accepted.

All numeric output uses 17-significant-digit scientific notation so a
round trip through CSV is lossless.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .errors import MissingColumn, SchemaError
from .propensity import ObservationSet, build_nsw_features

__all__ = [
    "ingest_csv",
    "emit_observations",
    "write_csv",
    "Manifest",
    "make_nsw_fixture",
    "NSW_ALIASES",
    "FLOAT_FORMAT",
]

FLOAT_FORMAT = "%.17e"

NSW_ALIASES = {
    "treat": "d",
    "treatment": "d",
    "re74": "earn1974",
    "re75": "earn1975",
    "re78": "y",
    "educ": "education",
    "hisp": "hispanic",
}

_NSW_REQUIRED = (
    "y",
    "d",
    "age",
    "education",
    "earn1974",
    "earn1975",
    "married",
    "black",
    "hispanic",
    "u74",
)


def _validate_d(d: pd.Series) -> np.ndarray:
    vals = d.to_numpy()
    bad = ~np.isin(vals, (0, 1))
    if bad.any():
        row = int(np.argmax(bad))
        raise SchemaError(f"column 'd' must be 0/1; offending value {vals[row]!r} in row {row}")
    return vals.astype(int)


def _validate_e(e: pd.Series) -> np.ndarray:
    vals = e.to_numpy(dtype=float)
    bad = ~((vals > 0.0) & (vals < 1.0))
    if bad.any():
        row = int(np.argmax(bad))
        raise SchemaError(f"column 'e' must lie in (0, 1); value {vals[row]!r} in row {row}")
    return vals


def ingest_csv(path, schema: str = "auto") -> ObservationSet:
    """Load an ObservationSet from a CSV file.

    ``schema`` is one of ``auto``, ``generic``, ``nsw``; ``auto`` picks nsw
    when the NSW covariates are all present.
    """
    # round_trip parsing keeps the emit -> ingest cycle lossless at 17
    # significant digits (the default C parser drops the last ulp)
    df = pd.read_csv(path, float_precision="round_trip")
    df = df.rename(columns={c: NSW_ALIASES.get(c, c) for c in df.columns})
    if schema == "auto":
        schema = "nsw" if all(c in df.columns for c in _NSW_REQUIRED) else "generic"
    if schema == "nsw":
        missing = [c for c in _NSW_REQUIRED if c not in df.columns]
        if missing:
            raise MissingColumn(f"NSW schema missing columns: {missing}")
        design, names = build_nsw_features(df)
        return ObservationSet(
            y=df["y"].to_numpy(dtype=float),
            d=_validate_d(df["d"]),
            covariates=design,
            column_names=names,
        )
    if schema != "generic":
        raise SchemaError(f"unknown schema {schema!r}")
    for col in ("y", "d"):
        if col not in df.columns:
            raise MissingColumn(f"generic schema requires column {col!r}")
    y = df["y"].to_numpy(dtype=float)
    d = _validate_d(df["d"])
    if "e" in df.columns:
        return ObservationSet(y=y, d=d, scores=_validate_e(df["e"]))
    covars = [c for c in df.columns if c not in ("y", "d")]
    if not covars:
        raise MissingColumn("generic schema needs either column 'e' or covariates")
    return ObservationSet(
        y=y,
        d=d,
        covariates=df[covars].to_numpy(dtype=float),
        column_names=tuple(covars),
    )


def _format_frame(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    for col in out.columns:
        if pd.api.types.is_float_dtype(out[col]):
            out[col] = out[col].map(lambda v: FLOAT_FORMAT % v)
    return out


def write_csv(df: pd.DataFrame, path) -> Path:
    """Write a data frame with full-precision floats; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _format_frame(df).to_csv(path, index=False)
    return path


def emit_observations(obs: ObservationSet, path) -> Path:
    """Inverse of ingest_csv for score-carrying observation sets."""
    data = {"y": obs.y, "d": obs.d}
    if obs.scores is not None:
        data["e"] = obs.scores
    elif obs.covariates is not None:
        for j, name in enumerate(obs.column_names):
            data[name] = obs.covariates[:, j]
    return write_csv(pd.DataFrame(data), path)


class Manifest:
    """Run manifest: config echo, stage timings, warnings, output hashes."""

    def __init__(self, config: dict):
        self.config = config
        self.version = __version__
        self.timings: dict[str, float] = {}
        self.warnings: list[str] = []
        self.outputs: dict[str, str] = {}
        self._t0 = time.perf_counter()
        self._stage_start = self._t0

    def stage(self, name: str):
        now = time.perf_counter()
        self.timings[name] = now - self._stage_start
        self._stage_start = now

    def warn(self, message: str):
        self.warnings.append(message)

    def add_output(self, path) -> None:
        path = Path(path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.outputs[path.name] = f"sha256:{digest}"

    def write(self, path) -> Path:
        path = Path(path)
        payload = {
            "config": self.config,
            "version": self.version,
            "timings_seconds": self.timings,
            "warnings": self.warnings,
            "outputs": self.outputs,
            "total_seconds": time.perf_counter() - self._t0,
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        return path


def make_nsw_fixture(n: int = 1342, n_treated: int = 185, seed: int = 0) -> pd.DataFrame:
    """Synthetic NSW-shaped dataset for CI runs (not the real data).

    Covariate marginals and the treated/control imbalance roughly mimic
    the program sample merged with a survey control group, with propensity
    scores piling up near zero so the heavy-tail pipeline has something to
    chew on.
    """
    rng = np.random.default_rng(seed)
    d = np.zeros(n, dtype=int)
    d[rng.choice(n, size=n_treated, replace=False)] = 1

    age = np.where(d == 1, rng.normal(25.0, 7.0, n), rng.normal(34.0, 10.0, n))
    age = np.clip(np.round(age), 17, 55)
    education = np.clip(np.round(rng.normal(10.5 + 1.5 * (1 - d), 2.0, n)), 3, 17)
    base = np.where(d == 1, 2.0, 19.0)
    earn1974 = np.where(rng.random(n) < 0.25 + 0.45 * d, 0.0, rng.gamma(2.0, base / 2.0, n))
    earn1975 = np.clip(
        0.7 * earn1974 + rng.gamma(1.5, base / 3.0, n) - 1.0, 0.0, None
    )
    married = (rng.random(n) < np.where(d == 1, 0.2, 0.75)).astype(int)
    black = (rng.random(n) < np.where(d == 1, 0.8, 0.25)).astype(int)
    hispanic = ((rng.random(n) < 0.07) & (black == 0)).astype(int)
    u74 = (earn1974 == 0).astype(int)
    y = np.clip(rng.gamma(1.2, 8.0, n) + 0.6 * earn1975 - 1.5 * d, 0.0, None)
    return pd.DataFrame(
        {
            "y": y,
            "d": d,
            "age": age,
            "education": education,
            "earn1974": earn1974,
            "earn1975": earn1975,
            "married": married,
            "black": black,
            "hispanic": hispanic,
            "u74": u74,
        }
    )
