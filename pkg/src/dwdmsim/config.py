"""Experiment configuration: JSON schema, strict validation, defaulting.

Config files are JSON whose keys mirror the simulator's dataclass fields.
Unknown keys are rejected, every default is echoed to the log.
"""

import json
import logging
from dataclasses import dataclass

from . import dmt as dmtmod
from . import pam4 as pam4mod
from .errors import ConfigError
from .fiber import AmplifierSpec, FiberSpec, FrontEndSpec, OpticalFilterSpec
from .wdm import ChannelPlan, DmtLoadingConfig, LinkConfig

log = logging.getLogger(__name__)

SWEEP_AXES = ("none", "residual_dispersion", "fiber_length", "osnr", "channel_count",
              "tdcm", "vsb_offset", "level_adjust")

# default VSB filter used when a vsb_offset sweep/knob targets a config
# without an explicit VSB filter
DEFAULT_VSB_BANDWIDTH = 35e9
DEFAULT_VSB_ORDER = 2
DEFAULT_VSB_OFFSET_RATIO = 0.6


@dataclass(frozen=True)
class ExperimentConfig:
    link: LinkConfig
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    output_path: str = "sweep.csv"
    replicate_seeds: int = 1

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}", field="sweep.axis")
        if self.sweep_axis != "none":
            if not self.sweep_values:
                raise ConfigError("sweep.values must be nonempty", field="sweep.values")
            if list(self.sweep_values) != sorted(self.sweep_values):
                raise ConfigError("sweep.values must be sorted", field="sweep.values")
        if self.replicate_seeds < 1:
            raise ConfigError("replicate_seeds must be >= 1", field="replicate_seeds")


def _require(cond, message, fieldname):
    if not cond:
        raise ConfigError(message, field=fieldname)


def _check_keys(section, allowed, prefix):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in {prefix or 'top level'}",
            field=(prefix + "." if prefix else "") + sorted(unknown)[0],
        )


def _get(section, key, default, prefix, kind=None, positive=False, nonneg=False):
    path = f"{prefix}.{key}" if prefix else key
    if key not in section:
        log.info("config default: %s = %r", path, default)
        return default
    value = section[key]
    if value is None:
        return None  # explicit null opts out of an optional feature
    if kind is float:
        _require(isinstance(value, (int, float)) and not isinstance(value, bool),
                 f"{path} must be a number", path)
        value = float(value)
    elif kind is int:
        _require(isinstance(value, int) and not isinstance(value, bool),
                 f"{path} must be an integer", path)
    elif kind is bool:
        _require(isinstance(value, bool), f"{path} must be a boolean", path)
    elif kind is str:
        _require(isinstance(value, str), f"{path} must be a string", path)
    elif kind is list:
        _require(isinstance(value, list), f"{path} must be a list", path)
    if positive and kind in (int, float):
        _require(value > 0, f"{path} must be > 0", path)
    if nonneg and kind in (int, float):
        _require(value >= 0, f"{path} must be >= 0", path)
    return value


def _parse_filter(section, prefix, defaults):
    if section is None:
        return None
    _check_keys(section, ("bandwidth_3db_hz", "order", "center_offset_hz"), prefix)
    return OpticalFilterSpec(
        bandwidth_3db_hz=_get(section, "bandwidth_3db_hz", defaults[0], prefix, float, positive=True),
        order=_get(section, "order", defaults[1], prefix, int, positive=True),
        center_offset_hz=_get(section, "center_offset_hz", defaults[2], prefix, float),
    )


def _parse_amp(section, prefix):
    if section is None:
        return None
    _check_keys(section, ("gain_db", "noise_figure_db"), prefix)
    return AmplifierSpec(
        gain_db=_get(section, "gain_db", 0.0, prefix, float, nonneg=True),
        noise_figure_db=_get(section, "noise_figure_db", 5.0, prefix, float),
    )


_TOP_KEYS = (
    "format", "seed", "bit_budget", "laser_power_w", "extinction_ratio_db",
    "responsivity_a_w", "thermal_sigma_a", "center_wavelength_m", "tdcm_ps_nm",
    "target_osnr_db", "interleaver", "plan", "fiber", "booster", "preamp",
    "demux_filter", "vsb_filter", "front_end", "pam4", "dmt", "sweep",
    "output_path", "replicate_seeds",
)


def build_experiment(raw):
    """Validate a parsed JSON object and build an ExperimentConfig with all
    defaults filled in."""
    _require(isinstance(raw, dict), "config must be a JSON object", "")
    _check_keys(raw, _TOP_KEYS, "")

    fmt = _get(raw, "format", "pam4", "", str)
    _require(fmt in ("pam4", "dmt"), "format must be 'pam4' or 'dmt'", "format")

    plan_raw = raw.get("plan") or {}
    _check_keys(plan_raw, ("channel_count", "grid_spacing_hz"), "plan")
    plan = ChannelPlan(
        channel_count=_get(plan_raw, "channel_count", 1, "plan", int, positive=True),
        grid_spacing_hz=_get(plan_raw, "grid_spacing_hz", 50e9, "plan", float, positive=True),
    )

    fiber_raw = raw.get("fiber") or {}
    _check_keys(
        fiber_raw,
        ("length_km", "dispersion_ps_nm_km", "attenuation_db_km", "reference_wavelength_m"),
        "fiber",
    )
    fiber = FiberSpec(
        length_km=_get(fiber_raw, "length_km", 0.0, "fiber", float, nonneg=True),
        dispersion_ps_nm_km=_get(fiber_raw, "dispersion_ps_nm_km", 17.0, "fiber", float),
        attenuation_db_km=_get(fiber_raw, "attenuation_db_km", 0.2, "fiber", float, nonneg=True),
        reference_wavelength_m=_get(fiber_raw, "reference_wavelength_m", 1550e-9, "fiber", float, positive=True),
    )

    fe_raw = raw.get("front_end") or {}
    _check_keys(
        fe_raw,
        ("resolution_bits", "analog_bandwidth_3db_hz", "full_scale", "samples_per_symbol"),
        "front_end",
    )
    front_end = FrontEndSpec(
        resolution_bits=_get(fe_raw, "resolution_bits", 8, "front_end", int),
        analog_bandwidth_3db_hz=_get(fe_raw, "analog_bandwidth_3db_hz", 20e9, "front_end", float),
        full_scale=_get(fe_raw, "full_scale", 1.0, "front_end", float, positive=True),
        samples_per_symbol=_get(fe_raw, "samples_per_symbol", 2, "front_end", int),
    )

    pam4_raw = raw.get("pam4") or {}
    _check_keys(
        pam4_raw,
        ("baud_hz", "pre_eq_taps", "levels", "level_adjustment", "prbs_order",
         "ffe_taps", "dfe_taps", "lms_step", "training_symbols"),
        "pam4",
    )
    pam4_tx = pam4mod.Pam4TxConfig(
        baud_hz=_get(pam4_raw, "baud_hz", 25.78125e9, "pam4", float, positive=True),
        pre_eq_taps=tuple(_get(pam4_raw, "pre_eq_taps", [0.0, 1.0, 0.0], "pam4", list)),
        levels=tuple(_get(pam4_raw, "levels", list(pam4mod.NOMINAL_LEVELS), "pam4", list)),
        level_adjustment=tuple(_get(pam4_raw, "level_adjustment", [0.0] * 4, "pam4", list)),
        prbs_order=_get(pam4_raw, "prbs_order", 15, "pam4", int),
    )
    pam4_rx = pam4mod.Pam4RxConfig(
        ffe_taps=_get(pam4_raw, "ffe_taps", 15, "pam4", int, positive=True),
        dfe_taps=_get(pam4_raw, "dfe_taps", 3, "pam4", int, positive=True),
        lms_step=_get(pam4_raw, "lms_step", 1e-3, "pam4", float),
        training_symbols=_get(pam4_raw, "training_symbols", 4000, "pam4", int, positive=True),
    )

    dmt_raw = raw.get("dmt") or {}
    _check_keys(
        dmt_raw,
        ("fft_size", "cp_length", "sample_rate_hz", "active_start", "active_stop",
         "clipping_ratio", "prbs_order", "loading_mode", "target_ber", "gap_db",
         "margin_db", "target_bits", "probe_symbols"),
        "dmt",
    )
    dmt_cfg = dmtmod.DmtConfig(
        fft_size=_get(dmt_raw, "fft_size", 512, "dmt", int, positive=True),
        cp_length=_get(dmt_raw, "cp_length", 16, "dmt", int, nonneg=True),
        sample_rate_hz=_get(dmt_raw, "sample_rate_hz", 50e9, "dmt", float, positive=True),
        active_start=_get(dmt_raw, "active_start", 1, "dmt", int, positive=True),
        active_stop=_get(dmt_raw, "active_stop", 255, "dmt", int, positive=True),
        clipping_ratio=_get(dmt_raw, "clipping_ratio", 3.2, "dmt", float, positive=True),
        prbs_order=_get(dmt_raw, "prbs_order", 15, "dmt", int),
    )
    mode = _get(dmt_raw, "loading_mode", "rate_adaptive", "dmt", str)
    _require(mode in ("rate_adaptive", "margin_adaptive"),
             "loading_mode must be rate_adaptive or margin_adaptive", "dmt.loading_mode")
    dmt_loading = DmtLoadingConfig(
        mode=mode,
        target_ber=_get(dmt_raw, "target_ber", 3.8e-3, "dmt", float, positive=True),
        gap_db=_get(dmt_raw, "gap_db", None, "dmt", float),
        margin_db=_get(dmt_raw, "margin_db", 0.0, "dmt", float, nonneg=True),
        target_bits=_get(dmt_raw, "target_bits", None, "dmt", int),
        probe_symbols=_get(dmt_raw, "probe_symbols", 64, "dmt", int, positive=True),
    )

    link = LinkConfig(
        format=fmt,
        plan=plan,
        fiber=fiber,
        booster=_parse_amp(raw.get("booster"), "booster"),
        preamp=_parse_amp(raw.get("preamp"), "preamp"),
        target_osnr_db=_get(raw, "target_osnr_db", None, "", float),
        tdcm_ps_nm=_get(raw, "tdcm_ps_nm", 0.0, "", float),
        demux_filter=_parse_filter(raw.get("demux_filter") or {}, "demux_filter", (44e9, 3, 0.0)),
        vsb_filter=_parse_filter(
            raw.get("vsb_filter"),
            "vsb_filter",
            (DEFAULT_VSB_BANDWIDTH, DEFAULT_VSB_ORDER,
             DEFAULT_VSB_OFFSET_RATIO * DEFAULT_VSB_BANDWIDTH),
        ),
        interleaver=_get(raw, "interleaver", False, "", bool),
        front_end=front_end,
        pam4_tx=pam4_tx,
        pam4_rx=pam4_rx,
        dmt=dmt_cfg,
        dmt_loading=dmt_loading,
        laser_power_w=_get(raw, "laser_power_w", 1e-3, "", float, positive=True),
        extinction_ratio_db=_get(raw, "extinction_ratio_db", 30.0, "", float, positive=True),
        responsivity_a_w=_get(raw, "responsivity_a_w", 1.0, "", float, positive=True),
        thermal_sigma_a=_get(raw, "thermal_sigma_a", 0.0, "", float, nonneg=True),
        center_wavelength_m=_get(raw, "center_wavelength_m", 1550e-9, "", float, positive=True),
        seed=_get(raw, "seed", 1, "", int),
        bit_budget=_get(raw, "bit_budget", 1 << 17, "", int, positive=True),
    )

    sweep_raw = raw.get("sweep") or {}
    _check_keys(sweep_raw, ("axis", "values"), "sweep")
    axis = _get(sweep_raw, "axis", "none", "sweep", str)
    values = tuple(_get(sweep_raw, "values", [], "sweep", list))

    return ExperimentConfig(
        link=link,
        sweep_axis=axis,
        sweep_values=values,
        output_path=_get(raw, "output_path", "sweep.csv", "", str),
        replicate_seeds=_get(raw, "replicate_seeds", 1, "", int),
    )


def parse_config(path):
    """Load, validate and default-fill an experiment config from a JSON file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}", field="")
    try:
        return build_experiment(raw)
    except ConfigError:
        raise
    except Exception as exc:  # dataclass validation errors name the field
        raise ConfigError(str(exc), field="")
