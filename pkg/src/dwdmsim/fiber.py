"""Analog/optical impairment chain: DAC/ADC, intensity modulator, fiber CD,
tunable dispersion compensation, EDFA with ASE, optical filters, photodiode.

Dispersion sign convention (THE convention for this package): the fiber
applies ``H(f) = exp(+j pi lambda^2 D L f^2 / c)`` to the complex envelope
under the forward-DFT convention of :mod:`dwdmsim.sigcore`; the TDCM applies
the same response with the negated dispersion-length product.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RateError
from .sigcore import (
    C_LIGHT,
    OpticalField,
    Waveform,
    add_awgn,
    apply_frequency_response,
    gaussian_lowpass_response,
)

PLANCK = 6.62607015e-34  # J s
OSNR_REF_BANDWIDTH = 12.5e9  # Hz (0.1 nm at 1550 nm)


@dataclass(frozen=True)
class FiberSpec:
    length_km: float
    dispersion_ps_nm_km: float = 17.0
    attenuation_db_km: float = 0.2
    reference_wavelength_m: float = 1550e-9

    def __post_init__(self):
        if self.length_km < 0:
            raise ParameterError("fiber length must be >= 0")
        if self.attenuation_db_km < 0:
            raise ParameterError("attenuation must be >= 0")

    @property
    def total_dispersion_ps_nm(self):
        return self.dispersion_ps_nm_km * self.length_km

    @property
    def total_loss_db(self):
        return self.attenuation_db_km * self.length_km


@dataclass(frozen=True)
class AmplifierSpec:
    gain_db: float | None  # None: gain-controlled, set to the span loss
    noise_figure_db: float = 5.0

    def __post_init__(self):
        if self.gain_db is not None and self.gain_db < 0:
            raise ParameterError("gain must be >= 0 dB")
        if self.noise_figure_db < 3.0:
            raise ParameterError("noise figure must be >= 3 dB")


@dataclass(frozen=True)
class OpticalFilterSpec:
    bandwidth_3db_hz: float
    order: int = 1  # 1 = Gaussian, >1 = super-Gaussian
    center_offset_hz: float = 0.0

    def __post_init__(self):
        if self.bandwidth_3db_hz <= 0:
            raise ParameterError("bandwidth_3db_hz must be > 0")
        if self.order < 1:
            raise ParameterError("filter order must be >= 1")


@dataclass(frozen=True)
class FrontEndSpec:
    resolution_bits: int = 8
    analog_bandwidth_3db_hz: float = 20e9  # None/inf disables the filter
    full_scale: float = 1.0
    samples_per_symbol: int = 2

    def __post_init__(self):
        if not (1 <= self.resolution_bits <= 16):
            raise ParameterError("resolution_bits must be in [1, 16]")
        if self.samples_per_symbol < 2:
            raise ParameterError("samples_per_symbol must be >= 2")
        if self.full_scale <= 0:
            raise ParameterError("full_scale must be > 0")


def quantize_midrise(x, resolution_bits, full_scale):
    """Uniform mid-rise quantizer over [-full_scale, +full_scale], clipping
    values outside the range to the outermost representatives."""
    step = 2.0 * full_scale / (1 << resolution_bits)
    q = step * (np.floor(x / step) + 0.5)
    return np.clip(q, -full_scale + step / 2, full_scale - step / 2)


def dac(symbol_stream, spec, symbol_rate):
    """Zero-order-hold upsampling, quantization, then analog Gaussian lowpass."""
    symbols = np.asarray(symbol_stream, dtype=float)
    if not np.all(np.isfinite(symbols)):
        raise ParameterError("symbols must be finite")
    held = np.repeat(symbols, spec.samples_per_symbol)
    quantized = quantize_midrise(held, spec.resolution_bits, spec.full_scale)
    wave = Waveform(quantized, symbol_rate * spec.samples_per_symbol)
    bw = spec.analog_bandwidth_3db_hz
    if bw is not None and np.isfinite(bw):
        wave = apply_frequency_response(wave, gaussian_lowpass_response(bw))
    return wave


def adc(waveform, spec, symbol_rate, phase_offset=0):
    """Analog Gaussian lowpass, quantization, downsampling to 1 sample/symbol."""
    ratio = waveform.sample_rate / symbol_rate
    if abs(ratio - round(ratio)) > 1e-9:
        raise RateError(
            f"sample_rate {waveform.sample_rate} is not an integer multiple of "
            f"symbol_rate {symbol_rate}"
        )
    ratio = int(round(ratio))
    bw = spec.analog_bandwidth_3db_hz
    wave = waveform
    if bw is not None and np.isfinite(bw):
        wave = apply_frequency_response(wave, gaussian_lowpass_response(bw))
    quantized = quantize_midrise(wave.samples, spec.resolution_bits, spec.full_scale)
    return quantized[int(phase_offset) % ratio::ratio]


def intensity_modulate(drive, laser_power, extinction_ratio_db, wavelength):
    """Chirp-free intensity modulator: optical power affine in the drive.

    drive -1 maps to P_min, +1 to P_max with P_max/P_min set by the extinction
    ratio and the midpoint bias (drive 0) at ``laser_power``.
    """
    if laser_power <= 0:
        raise ParameterError("laser_power must be > 0")
    x = drive.samples
    if np.max(np.abs(x)) > 1.0 + 1e-9:
        raise ParameterError("drive must be pre-scaled to [-1, +1]")
    er = 10.0 ** (extinction_ratio_db / 10.0) if np.isfinite(extinction_ratio_db) else np.inf
    if np.isinf(er):
        p_min, p_max = 0.0, 2.0 * laser_power
    else:
        p_min = 2.0 * laser_power / (1.0 + er)
        p_max = er * p_min
    power = p_min + (np.clip(x, -1.0, 1.0) + 1.0) / 2.0 * (p_max - p_min)
    return OpticalField(np.sqrt(power).astype(complex), drive.sample_rate, wavelength)


def _dispersion_response(wavelength, dl_ps_nm, loss_db=0.0):
    dl_s_per_m = dl_ps_nm * 1e-3  # 1 ps/nm = 1e-3 s/m
    amp = 10.0 ** (-loss_db / 20.0)

    def response(f):
        phase = np.pi * wavelength**2 * dl_s_per_m * np.asarray(f, dtype=float) ** 2 / C_LIGHT
        return amp * np.exp(1j * phase)

    return response


def chromatic_dispersion(field, fiber):
    """All-pass quadratic spectral phase plus scalar attenuation."""
    if fiber.length_km == 0:
        return field
    resp = _dispersion_response(
        field.center_wavelength, fiber.total_dispersion_ps_nm, fiber.total_loss_db
    )
    return apply_frequency_response(field, resp)


def tdcm(field, compensation_ps_nm):
    """Tunable dispersion compensator: lossless inverse of fiber dispersion."""
    if compensation_ps_nm == 0:
        return field
    resp = _dispersion_response(field.center_wavelength, -compensation_ps_nm, 0.0)
    return apply_frequency_response(field, resp)


def ase_psd(gain_db, noise_figure_db, wavelength):
    """Single-polarization ASE power spectral density in W/Hz."""
    g = 10.0 ** (gain_db / 10.0)
    nf = 10.0 ** (noise_figure_db / 10.0)
    nu = C_LIGHT / wavelength
    return (g - 1.0) * PLANCK * nu * nf / 2.0


def edfa(field, spec, rng_seed):
    """Flat-gain amplifier with additive ASE (single polarization)."""
    if spec.gain_db is None:
        raise ParameterError("amplifier gain is unresolved (gain-controlled spec)")
    g = 10.0 ** (spec.gain_db / 10.0)
    amplified = field.with_samples(field.samples * np.sqrt(g))
    s_ase = ase_psd(spec.gain_db, spec.noise_figure_db, field.center_wavelength)
    sigma = np.sqrt(s_ase * field.sample_rate / 2.0)
    return add_awgn(amplified, sigma, rng_seed)


def set_osnr(field, osnr_db, rng_seed, signal_power=None):
    """Inject ASE so the field's OSNR (12.5 GHz reference bandwidth, single
    polarization) equals ``osnr_db``. ``signal_power`` defaults to the mean
    field power; pass the per-channel power for WDM composites."""
    if signal_power is None:
        signal_power = field.mean_power
    s_ase = signal_power / (10.0 ** (osnr_db / 10.0) * OSNR_REF_BANDWIDTH)
    sigma = np.sqrt(s_ase * field.sample_rate / 2.0)
    return add_awgn(field, sigma, rng_seed)


def optical_filter(field, spec):
    """Zero-phase (super-)Gaussian optical bandpass, optionally offset from the
    channel center (a nonzero offset realizes VSB filtering)."""
    if spec.bandwidth_3db_hz >= field.sample_rate:
        pass  # still valid; response is nearly flat over the simulated band
    resp = gaussian_lowpass_response(
        spec.bandwidth_3db_hz, order=spec.order, center_offset=spec.center_offset_hz
    )
    return apply_frequency_response(field, resp)


def photodiode(field, responsivity, thermal_sigma, rng_seed):
    """Square-law detection with lumped Gaussian thermal current noise."""
    if responsivity <= 0:
        raise ParameterError("responsivity must be > 0")
    current = responsivity * np.abs(field.samples) ** 2
    wave = Waveform(current, field.sample_rate)
    if thermal_sigma > 0:
        wave = add_awgn(wave, thermal_sigma, rng_seed)
    return wave


def power_fading_null_hz(dl_ps_nm, wavelength, k=0):
    """k-th RF power-fading null of a DSB intensity signal after square-law
    detection: f = sqrt((2k+1) c / (2 lambda^2 D L))."""
    dl = dl_ps_nm * 1e-3
    return float(np.sqrt((2 * k + 1) * C_LIGHT / (2.0 * wavelength**2 * dl)))
