"""Finite-shot simulation of local measurement settings and witness estimation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .decomp import LocalDecomposition, Setting
from .errors import DimensionError, InvalidStateError, ParameterError
from .linalg import Operator

__all__ = ["ShotRecord", "Estimate", "simulate_setting", "estimate_witness", "shot_records_csv"]

PROB_TOL = 1e-12


@dataclass(frozen=True)
class ShotRecord:
    setting: int
    counts: np.ndarray  # shaped like the setting's coefficient tensor
    shots: int

    def __post_init__(self):
        if self.counts.sum() != self.shots or (self.counts < 0).any():
            raise ParameterError("counts must be non-negative and sum to shots")

    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    shots_per_setting: int
    settings_used: int
    records: tuple = ()


def _probabilities(rho, setting: Setting) -> np.ndarray:
    p = setting.probabilities(rho)
    if p.min() < -PROB_TOL or p.max() > 1 + PROB_TOL:
        raise InvalidStateError(f"outcome probability outside [0, 1] ({p.min():.3e}, {p.max():.3e})")
    p = np.clip(p, 0.0, 1.0)
    return p / p.sum()


def simulate_setting(rho, setting: Setting, shots: int, rng: np.random.Generator,
                     index: int = 0) -> ShotRecord:
    """Multinomial outcome counts for one joint local basis measurement."""
    if shots <= 0:
        raise ParameterError("shots must be positive")
    r = rho.mat if isinstance(rho, Operator) else np.asarray(rho)
    if r.shape[0] != math.prod(setting.dims):
        raise DimensionError("setting does not match the state dimension")
    p = _probabilities(r, setting)
    counts = rng.multinomial(shots, p.ravel()).reshape(p.shape)
    return ShotRecord(index, counts, int(shots))


def estimate_witness(rho, decomp: LocalDecomposition, shots_per_setting: int,
                     rng: np.random.Generator) -> Estimate:
    """Weighted sum of outcome frequencies over all settings.

    Each setting draws from its own child stream of ``rng``. The standard
    error adds the plug-in multinomial variances of the independent settings.
    """
    if shots_per_setting <= 0:
        raise ParameterError("shots_per_setting must be positive")
    streams = rng.spawn(len(decomp.settings))
    value, var, records = 0.0, 0.0, []
    for i, (s, g) in enumerate(zip(decomp.settings, streams)):
        rec = simulate_setting(rho, s, shots_per_setting, g, index=i)
        f = rec.frequencies()
        mean = float(np.sum(s.coeffs * f))
        second = float(np.sum(s.coeffs ** 2 * f))
        value += mean
        var += max(second - mean * mean, 0.0) / shots_per_setting
        records.append(rec)
    return Estimate(value, math.sqrt(var), int(shots_per_setting), len(decomp.settings), tuple(records))


def shot_records_csv(records: Sequence[ShotRecord]) -> str:
    """CSV with columns setting, outcome (dash-joined indices), count."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["setting", "outcome", "count"])
    for rec in records:
        for idx in np.ndindex(*rec.counts.shape):
            w.writerow([rec.setting, "-".join(str(i) for i in idx), int(rec.counts[idx])])
    return buf.getvalue()
