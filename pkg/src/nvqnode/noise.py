"""Calibrated error parameters of the node and their file format."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

SCHEMA = "nvqnode.noise/1"
TIME_BIN_SEPARATION_NS = 52.0


@dataclass(frozen=True)
class NoiseModel:
    readout_bright_fid: float = 0.809
    readout_dark_fid: float = 0.988
    p_gate_e: float = 0.005
    p_gate_ec: float = 0.03
    ec_nuclear_share: float = 1.0
    p_gate_c: float = 0.005
    p_flip_round: float = 0.02
    p_phase_round: float = 0.05
    round_duration_ms: float = 5.0
    herald_prob: float = 0.01
    mzi_visibility: float = 0.9
    reset_error: float = 0.0
    background_error: float = 0.0
    bin_overlap_error: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ValueError(f"{f.name} must be a finite number, got {v!r}")
            if f.name == "round_duration_ms":
                if v <= 0:
                    raise ValueError("round_duration_ms must be positive")
            elif not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name}={v} outside [0, 1]")

    @classmethod
    def noiseless(cls, **overrides) -> "NoiseModel":
        base = dict(readout_bright_fid=1.0, readout_dark_fid=1.0, p_gate_e=0.0,
                    p_gate_ec=0.0, p_gate_c=0.0, p_flip_round=0.0, p_phase_round=0.0,
                    herald_prob=1.0, mzi_visibility=1.0, reset_error=0.0)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "NoiseModel":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def confusion(self) -> "ConfusionMatrix":
        return ConfusionMatrix.from_fidelities(self.readout_bright_fid, self.readout_dark_fid)


@dataclass(frozen=True)
class ConfusionMatrix:
    """``matrix[observed, true]`` = P(observed bit | true bit); bit 0 is bright."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2) or np.any(m < 0) or np.any(m > 1):
            raise ValueError("confusion matrix must be 2x2 with entries in [0, 1]")
        if not np.allclose(m.sum(axis=0), 1.0, atol=1e-12):
            raise ValueError("confusion matrix columns must sum to 1")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_fidelities(cls, bright: float, dark: float) -> "ConfusionMatrix":
        return cls(np.array([[bright, 1 - dark], [1 - bright, dark]]))

    @classmethod
    def identity(cls) -> "ConfusionMatrix":
        return cls(np.eye(2))

    def p_report(self, observed: int, true: int) -> float:
        return float(self.matrix[observed, true])


def load_noise(path) -> NoiseModel:
    """Read a flat TOML calibration file; unknown keys are rejected."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    known = {f.name for f in dataclasses.fields(NoiseModel)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown noise keys in {path}: {', '.join(unknown)}")
    return NoiseModel(**{k: float(v) for k, v in raw.items()})


def dump_noise(noise: NoiseModel, comments: list[str] | None = None) -> str:
    lines = [f"# schema: {SCHEMA}"]
    lines += [f"# {c}" for c in comments or []]
    for k, v in noise.as_dict().items():
        lines.append(f"{k} = {float(v)!r}")
    return "\n".join(lines) + "\n"


def save_noise(noise: NoiseModel, path, comments: list[str] | None = None) -> None:
    Path(path).write_text(dump_noise(noise, comments))
