"""Pass/fail checks evaluated on a finished run.

A check is a mapping ``{check: name, group: k, max: x}`` (or ``min``). The
presets list the checks that define a successful reproduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analysis as A
from .dynamics import ContractViolation


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: str
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.4g} ({self.bound})"


def _tail(t, window):
    return t >= t[-1] - window


def _sync_final(log, g, spec):
    return A.sync_error(log.group(g)).value[-1]


def _track_final(log, g, spec):
    return float(A.tracking_error(log.group(g)).value[-1].max())


def _track_tail_mean(log, g, spec):
    te = A.tracking_error(log.group(g)).value
    return float(te[_tail(log.t, spec.get("window", 5.0))].mean(axis=0).min())


def _track_min_over_time(log, g, spec):
    return float(A.tracking_error(log.group(g)).value.min())


def _q_final(log, g, spec):
    return float(np.linalg.norm(log.group(g).q[-1], axis=1).max())


def _ahat_max(log, g, spec):
    ah = log.group(g).ahat
    if ah is None:
        raise ContractViolation("ahat_max needs an adaptive group")
    return float(np.abs(ah).max())


def _network_sync_final(log, g, spec):
    return float(A.network_sync_error(log).value[-1])


def _rate_gap(log, g, spec):
    """``lambda_sync - lambda_track``; NaN unless both fits reach ``min_r2``."""
    gl = log.group(g)
    trk = A.tracking_error(gl)
    try:
        fs = A.fit_rate(A.sync_error(gl))
        ft = A.fit_rate((trk.t, trk.composite))
    except ContractViolation:
        return float("nan")
    r2 = spec.get("min_r2", 0.95)
    if fs.r_squared < r2 or ft.r_squared < r2:
        return float("nan")
    return fs.lam - ft.lam


CHECKS = {
    "sync_final": _sync_final,
    "track_final": _track_final,
    "track_tail_mean": _track_tail_mean,
    "track_min_over_time": _track_min_over_time,
    "q_final": _q_final,
    "ahat_max": _ahat_max,
    "network_sync_final": _network_sync_final,
    "rate_gap": _rate_gap,
}


def evaluate(log, specs) -> list[CheckResult]:
    """Evaluate a list of check mappings against ``log``."""
    out = []
    for spec in specs or []:
        name = spec["check"]
        if name not in CHECKS:
            raise ContractViolation(f"unknown check {name!r}; expected one of {sorted(CHECKS)}")
        g = int(spec.get("group", 0))
        value = float(CHECKS[name](log, g, spec))
        if "max" in spec:
            ok, bound = value < spec["max"], f"< {spec['max']:g}"
        elif "min" in spec:
            ok, bound = value > spec["min"], f"> {spec['min']:g}"
        else:
            raise ContractViolation(f"check {name} needs a max or min bound")
        label = name if len(log.groups) == 1 or name.startswith("network") else f"{name}[{log.group(g).name}]"
        out.append(CheckResult(label, value, bound, bool(ok)))
    return out
