"""Log-log power-law fits used by scaling checks and sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass
class PowerFit:
    slope: float
    intercept: float
    stderr: float
    rvalue: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def loglog_fit(x, y) -> PowerFit:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs at least two positive points")
    if len(x) == 2:
        s = (np.log(y[1]) - np.log(y[0])) / (np.log(x[1]) - np.log(x[0]))
        return PowerFit(float(s), float(np.log(y[0]) - s * np.log(x[0])), 0.0, 1.0)
    r = stats.linregress(np.log(x), np.log(y))
    return PowerFit(float(r.slope), float(r.intercept), float(r.stderr), float(r.rvalue))
