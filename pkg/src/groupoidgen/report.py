"""Check records, pass/flag/fail triage and log-log slope fits."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

PASS, FLAG, FAIL = "pass", "flag", "fail"

# slope fits on four points are noisy: within this margin of the target we flag
SLOPE_FLAG_MARGIN = 0.5
# residuals at or below a caller-supplied floor carry no scaling information;
# exact-arithmetic checks use zero
RESIDUAL_FLOOR = 0.0


@dataclass
class SlopeFit:
    norms: list[float]
    residuals: list[float]
    slope: float
    exact: bool

    def to_json(self) -> dict:
        return asdict(self)


def fit_slope(norms: Sequence[float], residuals: Sequence[float], floor: float = RESIDUAL_FLOOR) -> SlopeFit:
    """Least-squares slope of ``log residual`` against ``log norm``.

    If every residual is at or below ``floor`` the identity holds to working
    precision and the fit is reported as exact (slope ``inf``).
    """
    n = np.asarray(norms, float)
    r = np.abs(np.asarray(residuals, float))
    if np.all(r <= floor):
        return SlopeFit(list(map(float, n)), list(map(float, r)), float("inf"), True)
    slope = float(np.polyfit(np.log(n), np.log(np.maximum(r, max(floor, 1e-300))), 1)[0])
    return SlopeFit(list(map(float, n)), list(map(float, r)), slope, False)


def slope_status(fit: SlopeFit, target: float, margin: float = SLOPE_FLAG_MARGIN) -> str:
    if fit.exact or fit.slope >= target:
        return PASS
    return FLAG if fit.slope >= target - margin else FAIL


def tol_status(value: float, tol: float) -> str:
    return PASS if abs(value) <= tol else FAIL


def halving_sweep(r: float, k: int = 4) -> list[float]:
    return [r / 2 ** i for i in range(k)]


@dataclass
class CheckRecord:
    name: str
    value: float
    target: str
    status: str
    runtime: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{self.status.upper():4}] {self.name}: {self.value:.6g} (target {self.target})"


@dataclass
class Report:
    checks: list[CheckRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, rec: CheckRecord) -> CheckRecord:
        if any(c.name == rec.name for c in self.checks):
            raise ValueError(f"check {rec.name!r} recorded twice")
        self.checks.append(rec)
        return rec

    def extend(self, other: "Report"):
        for c in other.checks:
            self.add(c)

    @property
    def failed(self) -> bool:
        return any(c.status == FAIL for c in self.checks)

    def to_json(self) -> dict:
        return {"meta": self.meta, "checks": [asdict(c) for c in self.checks]}

    def dump(self, path, timestamp: bool = True):
        # timestamp and runtimes share the first line; the rest is reproducible
        body = self.to_json()
        runtimes = {}
        for c in body["checks"]:
            runtimes[c["name"]] = round(c.pop("runtime"), 4)
        with open(path, "w") as fh:
            if timestamp:
                head = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"), "runtime": runtimes}
                fh.write(json.dumps(head, sort_keys=True, default=_jsonable) + "\n")
            fh.write(json.dumps(body, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"cannot serialize {type(obj)}")


def load_report(path) -> dict:
    with open(path) as fh:
        first, rest = fh.read().split("\n", 1)
    head = json.loads(first)
    if "timestamp" not in head:
        return json.loads(first + "\n" + rest)
    body = json.loads(rest)
    body["timestamp"] = head["timestamp"]
    for c in body["checks"]:
        c["runtime"] = head.get("runtime", {}).get(c["name"], 0.0)
    return body


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
