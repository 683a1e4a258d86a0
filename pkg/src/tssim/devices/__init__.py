"""Dynamic device model library."""

from .base import DeviceJacobian, DeviceModel, SplitBlock, VariableDecl
from .genrou import (FLUX_BLOCK, ExciterParams, GenrouGenerator, GenrouParams,
                     GovernorParams, d_axis_projection, exciter_lag_rhs,
                     fit_saturation, flux_linkage_eval, governor_lag_rhs,
                     saturation_slope, saturation_value, stator_residual)
from .renewable import (IQINJ_BLOCK, LVPL_BLOCK, VDEV_BLOCK, RegcaParams,
                        ReecaParams, RenewablePlant, iq_injection, lvpl_gain,
                        lvpl_output, voltage_deviation)

__all__ = [
    "DeviceJacobian", "DeviceModel", "SplitBlock", "VariableDecl",
    "FLUX_BLOCK", "ExciterParams", "GenrouGenerator", "GenrouParams",
    "GovernorParams", "d_axis_projection", "exciter_lag_rhs",
    "fit_saturation", "flux_linkage_eval", "governor_lag_rhs",
    "saturation_slope", "saturation_value", "stator_residual",
    "IQINJ_BLOCK", "LVPL_BLOCK", "VDEV_BLOCK", "RegcaParams", "ReecaParams",
    "RenewablePlant", "iq_injection", "lvpl_gain", "lvpl_output",
    "voltage_deviation",
]
