"""Residual fusion of a recurrent network with a seasonal ARIMA expert.

The fused forecast is the expert's one-step forecast plus a learned
correction computed by an LSTM from the recent window and the expert's
forecast itself.
"""

from .config import ConfigError, RunConfig, load_config
from .experts import (
    ExpertModel,
    LaggedExpert,
    NoisyExpert,
    SarimaConfig,
    SarimaModel,
    ZeroExpert,
    decorate,
    fit_sarima,
    load_expert,
    rolling_forecast,
    save_expert,
    seasonal_naive,
)
from .kernels import BACKEND
from .nn import NetworkConfig, NetworkParams, TrainReport, init_params
from .residual import (
    ConditioningMode,
    KinnModel,
    SeriesSplit,
    TrainSettings,
    kinn_predict,
    kinn_train,
    load_bundle,
    save_bundle,
    train_plain,
)
from .timeseries import TimeSeries, load_csv, make_windows, pacf, split

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConditioningMode",
    "ConfigError",
    "ExpertModel",
    "KinnModel",
    "LaggedExpert",
    "NetworkConfig",
    "NetworkParams",
    "NoisyExpert",
    "RunConfig",
    "SarimaConfig",
    "SarimaModel",
    "SeriesSplit",
    "TimeSeries",
    "TrainReport",
    "TrainSettings",
    "ZeroExpert",
    "decorate",
    "fit_sarima",
    "init_params",
    "kinn_predict",
    "kinn_train",
    "load_bundle",
    "load_config",
    "load_csv",
    "load_expert",
    "make_windows",
    "pacf",
    "rolling_forecast",
    "save_bundle",
    "save_expert",
    "seasonal_naive",
    "split",
    "train_plain",
]
