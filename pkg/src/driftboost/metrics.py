"""The five regression metrics used for model comparison, plus ranking.

Conventions worth noting:

* ``r2`` is returned as computed. It is negative whenever the fit is worse
  than predicting the mean, which happens routinely on held-out data; the
  often-quoted [0, 1] interval only applies in-sample with an intercept.
* ``mape`` is normalized by the number of samples (mean, in percent). The
  unnormalized sum is dimensionally inconsistent with a "percentage of
  actual" interpretation, so the mean form is used.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

# Columns of every report table, in fixed order. TT is wall-clock training
# time and is excluded from ranking and from determinism comparisons.
REPORT_COLUMNS = ["R2", "MAE", "MSE", "RMSE", "MAPE", "TT (Sec)"]

_MAPE_MIN_ACTUAL = 1e-12


def _check_pair(y: np.ndarray, y_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValueError(f"need two equal-length vectors, got shapes {y.shape} and {y_hat.shape}")
    if y.size == 0:
        raise ValueError("empty vectors")
    return y, y_hat


def r2(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    y, y_hat = _check_pair(y, y_hat)
    if y.size < 2:
        raise ValueError("r2 needs at least 2 samples")
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("r2 undefined for a constant target")
    ss_res = float(((y - y_hat) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def mae(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Mean absolute error."""
    y, y_hat = _check_pair(y, y_hat)
    return float(np.abs(y_hat - y).mean())


def mse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Mean squared error."""
    y, y_hat = _check_pair(y, y_hat)
    return float(((y_hat - y) ** 2).mean())


def rmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Root mean squared error."""
    return float(np.sqrt(mse(y, y_hat)))


def mape(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Mean absolute percentage error, in percent.

    Raises if any actual value has magnitude below 1e-12: the ratio is then
    meaningless (the drift-ratio target is strictly positive in practice).
    """
    y, y_hat = _check_pair(y, y_hat)
    if np.any(np.abs(y) < _MAPE_MIN_ACTUAL):
        i = int(np.argmax(np.abs(y) < _MAPE_MIN_ACTUAL))
        raise ValueError(f"mape undefined: |actual| < {_MAPE_MIN_ACTUAL} at index {i}")
    return float(100.0 * (np.abs(y - y_hat) / np.abs(y)).mean())


@dataclass
class MetricsReport:
    """All five metrics for one model on one evaluation set."""

    model_name: str
    n: int
    r2: float
    mae: float
    mse: float
    rmse: float
    mape: float
    training_time_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def evaluate(y_hat: np.ndarray, y: np.ndarray, model_name: str, training_time_s: float = 0.0) -> MetricsReport:
    """Bundle all five metrics plus the training time into one report."""
    y, y_hat = _check_pair(y, y_hat)
    return MetricsReport(
        model_name=model_name,
        n=int(y.size),
        r2=r2(y, y_hat),
        mae=mae(y, y_hat),
        mse=mse(y, y_hat),
        rmse=rmse(y, y_hat),
        mape=mape(y, y_hat),
        training_time_s=training_time_s,
    )


def rank_models(reports: list[MetricsReport]) -> list[MetricsReport]:
    """Most efficient model first: descending R2, then ascending RMSE, then name."""
    if not reports:
        raise ValueError("nothing to rank")
    return sorted(reports, key=lambda r: (-r.r2, r.rmse, r.model_name))
