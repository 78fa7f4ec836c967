"""Next-24h carbon-intensity forecasting baselines and daywise evaluation.

These forecasters stand in for a heavyweight learned predictor: the simulator
only needs some 24-hour-ahead estimate of bounded error, so persistence,
seasonal-naive, and autoregressive baselines are provided behind a common
interface, plus an oracle that replays the actual trace for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trace import CarbonTrace, mape


@dataclass(frozen=True)
class Forecast:
    """Forecast issued at hour ``origin`` for the next ``horizon`` hours."""

    origin: int
    horizon: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.size != self.horizon:
            raise ValueError(f"forecast length {arr.size} != horizon {self.horizon}")
        if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
            raise ValueError("forecast values must be finite and >= 0")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class ARModel:
    """Autoregressive one-step model fit by least squares.

    ``coefficients`` holds the lag weights followed by the intercept
    (length ``lags + 1``).
    """

    lags: int
    coefficients: np.ndarray
    fit_rmse: float


def persistence_forecast(history, horizon: int) -> Forecast:
    """Repeat the last observed value for the whole horizon."""
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        raise ValueError("persistence forecast needs a non-empty history")
    return Forecast(origin=h.size, horizon=horizon, values=np.full(horizon, h[-1]))


def seasonal_naive_forecast(history, horizon: int) -> Forecast:
    """Repeat the last full day: value at offset h is history[-24 + h mod 24]."""
    h = np.asarray(history, dtype=float)
    if h.size < 24:
        raise ValueError(f"seasonal naive needs >= 24 hours of history, got {h.size}")
    last_day = h[-24:]
    values = last_day[np.arange(horizon) % 24]
    return Forecast(origin=h.size, horizon=horizon, values=values)


def fit_ar_forecaster(history, lags: int) -> ARModel:
    """Fit AR(lags) coefficients plus intercept by ridge-stabilized OLS.

    The tiny ridge term (1e-8 on the normal-equation diagonal) keeps singular
    designs (e.g. constant histories) solvable and deterministic.
    """
    h = np.asarray(history, dtype=float)
    if lags < 1:
        raise ValueError("lags must be >= 1")
    if h.size < lags + 8:
        raise ValueError(f"need at least lags+8={lags + 8} observations, got {h.size}")
    n_rows = h.size - lags
    design = np.empty((n_rows, lags + 1))
    for j in range(lags):
        # column j: value at lag (j+1) before the target
        design[:, j] = h[lags - 1 - j : h.size - 1 - j]
    design[:, lags] = 1.0
    target = h[lags:]
    gram = design.T @ design + 1e-8 * np.eye(lags + 1)
    coef = np.linalg.solve(gram, design.T @ target)
    resid = design @ coef - target
    rmse = float(np.sqrt(np.mean(resid**2)))
    return ARModel(lags=lags, coefficients=coef, fit_rmse=rmse)


def ar_forecast(model: ARModel, history, horizon: int) -> Forecast:
    """Iterate one-step predictions, feeding each back; clamped at zero."""
    h = np.asarray(history, dtype=float)
    if h.size < model.lags:
        raise ValueError(f"history of {h.size} shorter than model lags {model.lags}")
    window = list(h[-model.lags :])
    coef = model.coefficients
    out = np.empty(horizon)
    for step in range(horizon):
        lagged = window[::-1]  # most recent first, matching the design layout
        pred = float(np.dot(coef[:-1], lagged) + coef[-1])
        pred = max(pred, 0.0)
        out[step] = pred
        window.pop(0)
        window.append(pred)
    return Forecast(origin=h.size, horizon=horizon, values=out)


class PersistenceForecaster:
    name = "persistence"
    min_history = 1

    def forecast(self, history, horizon: int) -> Forecast:
        return persistence_forecast(history, horizon)


class SeasonalNaiveForecaster:
    name = "seasonal"
    min_history = 24

    def forecast(self, history, horizon: int) -> Forecast:
        return seasonal_naive_forecast(history, horizon)


class ARForecaster:
    """Refits AR(lags) on the full history at every forecast origin."""

    name = "ar"

    def __init__(self, lags: int = 24):
        self.lags = lags
        self.min_history = lags + 8

    def forecast(self, history, horizon: int) -> Forecast:
        model = fit_ar_forecaster(history, self.lags)
        return ar_forecast(model, history, horizon)


class PrefixedForecaster:
    """Wrap a forecaster so it sees fixed prior observations before hour 0.

    A deployed scheduler usually starts with historical intensity data on
    hand; the wrapped method receives ``prefix + history`` as its history, so
    methods with warm-up requirements (seasonal, AR) work from the first
    simulated hour.
    """

    def __init__(self, inner, prefix):
        self.inner = inner
        self.name = f"prefixed-{inner.name}"
        self.prefix = np.asarray(prefix, dtype=float)
        if self.prefix.ndim != 1 or self.prefix.size == 0:
            raise ValueError("prefix must be a non-empty 1-D array")
        self.min_history = max(1, getattr(inner, "min_history", 1) - self.prefix.size)

    def forecast(self, history, horizon: int) -> Forecast:
        full = np.concatenate([self.prefix, np.asarray(history, dtype=float)])
        inner = self.inner.forecast(full, horizon)
        return Forecast(origin=np.asarray(history).size, horizon=horizon,
                        values=inner.values)


class OracleForecaster:
    """Replays the actual trace; the history prefix fixes the origin."""

    name = "oracle"

    def __init__(self, trace: CarbonTrace):
        self.trace = trace

    def forecast(self, history, horizon: int) -> Forecast:
        origin = np.asarray(history).size
        end = origin + horizon
        if end > len(self.trace):
            raise ValueError(f"oracle horizon extends past trace end ({end} > {len(self.trace)})")
        return Forecast(origin=origin, horizon=horizon, values=self.trace.intensities[origin:end])


def make_forecaster(method: str, trace: CarbonTrace | None = None, lags: int = 24):
    if method == "persistence":
        return PersistenceForecaster()
    if method == "seasonal":
        return SeasonalNaiveForecaster()
    if method == "ar":
        return ARForecaster(lags=lags)
    if method == "oracle":
        if trace is None:
            raise ValueError("oracle forecaster needs the trace")
        return OracleForecaster(trace)
    raise ValueError(f"unknown forecast method {method!r}")


def rolling_evaluate(
    forecaster, trace: CarbonTrace, test_start: int, days: int
) -> tuple[float, float, float]:
    """Daywise MAPE over a rolling 72-hour evaluation protocol.

    Forecast origins are placed every 24 hours starting at ``test_start``;
    from each origin a 72-hour forecast is issued using all history before
    the origin. Day-1/2/3 MAPEs aggregate the errors at horizons (0, 24],
    (24, 48], (48, 72] respectively across all origins.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    needed = test_start + (days - 1) * 24 + 72
    if needed > len(trace):
        raise ValueError(f"trace too short: need {needed} hours, have {len(trace)}")
    actual_by_day: list[list[float]] = [[], [], []]
    pred_by_day: list[list[float]] = [[], [], []]
    for d in range(days):
        origin = test_start + 24 * d
        history = trace.intensities[:origin]
        fc = forecaster.forecast(history, 72)
        actual = trace.intensities[origin : origin + 72]
        for day in range(3):
            sl = slice(24 * day, 24 * (day + 1))
            actual_by_day[day].extend(actual[sl])
            pred_by_day[day].extend(fc.values[sl])
    return tuple(mape(actual_by_day[d], pred_by_day[d]) for d in range(3))
