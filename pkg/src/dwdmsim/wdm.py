"""WDM system assembly: channel plans, spectral multiplex/demultiplex on the
composite field, and the end-to-end per-channel experiment runner."""

from dataclasses import dataclass, field, replace

import numpy as np

from . import dmt as dmtmod
from . import pam4 as pam4mod
from .errors import BandwidthError, DivergenceError, ParameterError
from .fiber import (
    AmplifierSpec,
    FiberSpec,
    FrontEndSpec,
    OpticalFilterSpec,
    adc,
    chromatic_dispersion,
    dac,
    edfa,
    intensity_modulate,
    optical_filter,
    photodiode,
    set_osnr,
    tdcm,
)
from .sigcore import (
    HD_FEC_LIMIT,
    KR4_FEC_LIMIT,
    BerReport,
    OpticalField,
    Waveform,
    ber_count,
    derived_seed,
)

# tags for per-purpose child seeds
_SEED_PRBS = 1
_SEED_BOOSTER = 2
_SEED_OSNR = 3
_SEED_PREAMP = 4
_SEED_PHOTODIODE = 5
_SEED_PROBE = 6
_SEED_THERMAL = 7


@dataclass(frozen=True)
class ChannelPlan:
    channel_count: int = 1
    grid_spacing_hz: float = 50e9

    def __post_init__(self):
        if self.channel_count < 1:
            raise ParameterError("channel_count must be >= 1")
        if self.grid_spacing_hz <= 0:
            raise ParameterError("grid_spacing_hz must be > 0")

    @property
    def offsets_hz(self):
        n = self.channel_count
        return (np.arange(n) - (n - 1) / 2.0) * self.grid_spacing_hz

    @property
    def span_hz(self):
        return (self.channel_count - 1) * self.grid_spacing_hz


@dataclass(frozen=True)
class DmtLoadingConfig:
    mode: str = "rate_adaptive"  # or "margin_adaptive"
    target_ber: float = HD_FEC_LIMIT
    gap_db: float | None = None  # overrides target_ber when set
    margin_db: float = 0.0  # extra SNR margin added on top of the gap
    target_bits: int | None = None
    probe_symbols: int = 64

    def resolved_gap_db(self):
        if self.gap_db is not None:
            return self.gap_db + self.margin_db
        return 10.0 * np.log10(dmtmod.gap_from_target_ber(self.target_ber)) + self.margin_db


@dataclass(frozen=True)
class LinkConfig:
    format: str = "pam4"  # "pam4" | "dmt"
    plan: ChannelPlan = field(default_factory=ChannelPlan)
    fiber: FiberSpec = field(default_factory=lambda: FiberSpec(length_km=0.0))
    booster: AmplifierSpec | None = None
    preamp: AmplifierSpec | None = None
    target_osnr_db: float | None = None  # replaces preamp ASE when set
    tdcm_ps_nm: float = 0.0
    demux_filter: OpticalFilterSpec = field(
        default_factory=lambda: OpticalFilterSpec(bandwidth_3db_hz=44e9, order=3)
    )
    vsb_filter: OpticalFilterSpec | None = None  # per-channel tx-side VSB
    interleaver: bool = False
    front_end: FrontEndSpec = field(default_factory=FrontEndSpec)
    pam4_tx: pam4mod.Pam4TxConfig = field(default_factory=pam4mod.Pam4TxConfig)
    pam4_rx: pam4mod.Pam4RxConfig = field(default_factory=pam4mod.Pam4RxConfig)
    dmt: dmtmod.DmtConfig = field(default_factory=dmtmod.DmtConfig)
    dmt_loading: DmtLoadingConfig = field(default_factory=DmtLoadingConfig)
    laser_power_w: float = 1e-3
    extinction_ratio_db: float = 30.0
    responsivity_a_w: float = 1.0
    thermal_sigma_a: float = 0.0
    center_wavelength_m: float = 1550e-9
    seed: int = 1
    bit_budget: int = 1 << 17

    def __post_init__(self):
        if self.format not in ("pam4", "dmt"):
            raise ParameterError(f"unknown format {self.format!r}")
        if self.bit_budget < 2:
            raise ParameterError("bit_budget must be >= 2")

    @property
    def channel_sample_rate(self):
        if self.format == "pam4":
            return self.pam4_tx.baud_hz * self.front_end.samples_per_symbol
        return self.dmt.sample_rate_hz * self.front_end.samples_per_symbol

    def composite_rate(self):
        """Smallest integer multiple of the channel rate that covers the plan
        with one grid spacing of guard band on each side."""
        fs_ch = self.channel_sample_rate
        needed = self.plan.span_hz + 2.0 * self.plan.grid_spacing_hz
        m = max(1, int(np.ceil(needed / fs_ch)))
        return m * fs_ch


# interleaver passbands: per-channel super-Gaussian on the 50-GHz grid
INTERLEAVER_ORDER = 3
INTERLEAVER_BANDWIDTH_RATIO = 0.88  # 44 GHz passband on 50 GHz centers


@dataclass(frozen=True)
class ChannelResult:
    channel: int
    report: BerReport | None
    achieved_bits_per_symbol: float | None = None
    achieved_rate_gbps: float | None = None
    error: str | None = None


def _shift_bins(n, offset_hz, sample_rate):
    """Offset rounded to the nearest integer DFT bin (keeps shifts circular)."""
    return int(round(offset_hz * n / sample_rate))


def _spectral_shift(field, offset_hz):
    n = field.samples.size
    k = _shift_bins(n, offset_hz, field.sample_rate)
    if k == 0:
        return field
    shifted = np.fft.ifft(np.roll(np.fft.fft(field.samples), k))
    return field.with_samples(shifted)


def _resample(field, new_rate):
    """Exact spectral resampling between integer-related rates; preserves
    per-sample power scaling of the complex envelope."""
    old_n = field.samples.size
    ratio = new_rate / field.sample_rate
    new_n = ratio * old_n
    if abs(new_n - round(new_n)) > 1e-6:
        raise ParameterError("resampling requires integer-related lengths")
    new_n = int(round(new_n))
    if new_n == old_n:
        return field
    spec = np.fft.fftshift(np.fft.fft(field.samples))
    if new_n > old_n:
        pad = new_n - old_n
        spec = np.pad(spec, (pad - pad // 2, pad // 2))
    else:
        cut = old_n - new_n
        spec = spec[cut - cut // 2 : old_n - cut // 2]
    out = np.fft.ifft(np.fft.ifftshift(spec)) * (new_n / old_n)
    return OpticalField(out, new_rate, field.center_wavelength)


def multiplex(channels, plan, composite_rate, interleaver=False):
    """Resample each channel to the composite rate, shift to its grid offset
    and sum. The optional interleaver applies per-channel passbands first."""
    if len(channels) != plan.channel_count:
        raise ParameterError("channel count does not match plan")
    if plan.span_hz + plan.grid_spacing_hz > composite_rate:
        raise BandwidthError(
            f"plan span {plan.span_hz:.3g} Hz does not fit composite rate "
            f"{composite_rate:.3g} Hz"
        )
    total = None
    for ch, offset in zip(channels, plan.offsets_hz):
        up = _resample(ch, composite_rate)
        if interleaver:
            spec = OpticalFilterSpec(
                bandwidth_3db_hz=INTERLEAVER_BANDWIDTH_RATIO * plan.grid_spacing_hz,
                order=INTERLEAVER_ORDER,
            )
            up = optical_filter(up, spec)
        up = _spectral_shift(up, offset)
        total = up if total is None else total.with_samples(total.samples + up.samples)
    return total


def demultiplex(composite, plan, index, filter_spec, channel_rate):
    """Shift the selected channel to baseband, filter, resample down."""
    if not (0 <= index < plan.channel_count):
        raise ParameterError(f"channel index {index} out of range")
    down = _spectral_shift(composite, -plan.offsets_hz[index])
    down = optical_filter(down, filter_spec)
    return _resample(down, channel_rate)


def _amplify_and_propagate(composite, config, base_seed):
    """Booster -> fiber -> TDCM -> preamp/OSNR, shared by both formats."""
    out = composite
    if config.booster is not None:
        out = edfa(out, config.booster, derived_seed(base_seed, _SEED_BOOSTER))
    out = chromatic_dispersion(out, config.fiber)
    if config.tdcm_ps_nm:
        out = tdcm(out, config.tdcm_ps_nm)
    if config.target_osnr_db is not None:
        per_channel = out.mean_power / config.plan.channel_count
        out = set_osnr(
            out,
            config.target_osnr_db,
            derived_seed(base_seed, _SEED_OSNR),
            signal_power=per_channel,
        )
    elif config.preamp is not None:
        preamp = config.preamp
        if preamp.gain_db is None:  # gain-controlled: recover the span loss
            preamp = replace(preamp, gain_db=config.fiber.total_loss_db)
        out = edfa(out, preamp, derived_seed(base_seed, _SEED_PREAMP))
    return out


def _transmit_composite(tx_waveforms, config, base_seed):
    """Modulate per-channel drive waveforms (already scaled into [-1, 1]) onto
    the optical carriers, run the shared optical path and return the
    per-channel detected waveforms."""
    fields = []
    for w in tx_waveforms:
        drive = w.with_samples(np.clip(w.samples, -1.0, 1.0))
        f = intensity_modulate(
            drive, config.laser_power_w, config.extinction_ratio_db, config.center_wavelength_m
        )
        if config.vsb_filter is not None:
            f = optical_filter(f, config.vsb_filter)
            # VOA/AGC at the transmitter output: restore the per-channel launch
            # power so the filter's insertion loss does not starve the chain
            p = f.mean_power
            if p > 0:
                f = f.with_samples(f.samples * np.sqrt(config.laser_power_w / p))
        fields.append(f)
    composite = multiplex(fields, config.plan, config.composite_rate(), config.interleaver)
    composite = _amplify_and_propagate(composite, config, base_seed)
    received = []
    for idx in range(config.plan.channel_count):
        ch_field = demultiplex(
            composite, config.plan, idx, config.demux_filter, config.channel_sample_rate
        )
        wave = photodiode(
            ch_field,
            config.responsivity_a_w,
            config.thermal_sigma_a,
            derived_seed(base_seed, _SEED_PHOTODIODE, idx),
        )
        received.append(wave)
    return received


def _normalize_for_adc(wave, front_end):
    """Center the detected waveform and scale its rms to a quarter of the ADC
    full scale (headroom against clipping)."""
    x = wave.samples - np.mean(wave.samples)
    rms = np.sqrt(np.mean(x**2))
    if rms > 0:
        x = x * (0.25 * front_end.full_scale / rms)
    return wave.with_samples(x)


def _receive_pam4_channel(wave, reference, config):
    """Front-end, phase pick, alignment, FFE-DFE and demapping for one channel."""
    fe = config.front_end
    norm = _normalize_for_adc(wave, fe)
    best = None
    for phase in range(fe.samples_per_symbol):
        samples = adc(norm, fe, config.pam4_tx.baud_hz, phase_offset=phase)
        samples = samples[: reference.size]
        aligned, _lag = pam4mod.align_circular(samples, reference)
        scaled = pam4mod.normalize_to_reference(aligned, reference)
        mse = float(np.mean((scaled - reference) ** 2))
        if best is None or mse < best[0]:
            best = (mse, scaled)
    equalized = pam4mod.ffe_dfe_equalize(best[1], reference, config.pam4_rx)
    return equalized


def _run_pam4(config):
    n_channels = config.plan.channel_count
    tx = config.pam4_tx
    n_bits = config.bit_budget - (config.bit_budget % 2)
    levels = pam4mod.level_adjust(tx.levels, tx.level_adjustment)
    thresholds = pam4mod.midpoint_thresholds(levels)

    bits_per_channel = []
    refs = []
    waveforms = []
    for idx in range(n_channels):
        bits = pam4mod.pam4_bits_for_channel(
            n_bits, tx.prbs_order, derived_seed(config.seed, _SEED_PRBS, idx)
        )
        symbols = pam4mod.pam4_map(bits, levels)
        shaped = pam4mod.pre_equalize(symbols, tx.pre_eq_taps)
        peak = np.max(np.abs(shaped))
        drive_symbols = shaped / peak if peak > 0 else shaped
        wave = dac(drive_symbols * config.front_end.full_scale, config.front_end, tx.baud_hz)
        # the analog filter can overshoot the DAC range slightly; renormalize
        wpeak = np.max(np.abs(wave.samples))
        if wpeak > 0:
            wave = wave.with_samples(wave.samples / wpeak)
        waveforms.append(wave)
        bits_per_channel.append(bits)
        refs.append(symbols)

    received = _transmit_composite(waveforms, config, config.seed)

    results = []
    skip = config.pam4_rx.training_symbols
    for idx in range(n_channels):
        try:
            equalized = _receive_pam4_channel(received[idx], refs[idx], config)
            rx_bits = pam4mod.pam4_demap(equalized[skip:], thresholds, levels)
            report = ber_count(bits_per_channel[idx][2 * skip :], rx_bits, KR4_FEC_LIMIT)
            results.append(ChannelResult(channel=idx, report=report))
        except DivergenceError as exc:
            results.append(
                ChannelResult(channel=idx, report=None, error=f"divergence: {exc}")
            )
    return results


DMT_PREAMBLE_SYMBOLS = 16  # known QPSK symbols prepended to every DMT frame
MAX_PAYLOAD_SYMBOLS = 8192  # frame-length cap; bits_compared shrinks instead


def _dmt_drive_scale(config):
    """Absolute drive scale shared by probe and payload frames: the all-active
    QPSK probe at this scale peaks near the clip level of the DAC range."""
    cfg = config.dmt
    ref_rms = np.sqrt(2.0 * cfg.n_active) / cfg.fft_size
    ratio = cfg.clipping_ratio if np.isfinite(cfg.clipping_ratio) else 4.0
    return 1.0 / (ratio * ref_rms)


def _dmt_tx_frame(freq_symbols, config):
    """Assemble a DMT frame, apply the shared drive scale and the DAC."""
    cfg = config.dmt
    wave = dmtmod._assemble_symbols(freq_symbols, cfg)
    scaled = wave.samples * _dmt_drive_scale(config)
    return dac(scaled * config.front_end.full_scale, config.front_end, cfg.sample_rate_hz)


def _dmt_rx_frame(wave, config):
    """Front-end the detected waveform back to one sample per DMT sample."""
    cfg = config.dmt
    norm = _normalize_for_adc(wave, config.front_end)
    samples = adc(norm, config.front_end, cfg.sample_rate_hz, phase_offset=0)
    return Waveform(samples, cfg.sample_rate_hz)


def _dmt_preamble(config, channel):
    return dmtmod.probe_symbols_qpsk(
        config.dmt,
        DMT_PREAMBLE_SYMBOLS,
        derived_seed(config.seed, _SEED_PROBE, channel, 1),
    )


def dmt_probe_and_load(config):
    """Run the probe phase of a DMT link and return the per-channel SNR
    profiles and Levin-Campello loading tables."""
    n_channels = config.plan.channel_count
    cfg = config.dmt
    loading = config.dmt_loading

    # Every channel transmits its own QPSK probe simultaneously; the
    # per-subcarrier SNR is measured after one-tap equalization.
    known = [
        dmtmod.probe_symbols_qpsk(
            cfg, loading.probe_symbols, derived_seed(config.seed, _SEED_PROBE, idx)
        )
        for idx in range(n_channels)
    ]
    probe_tx = [_dmt_tx_frame(known[idx], config) for idx in range(n_channels)]
    probe_rx = _transmit_composite(probe_tx, config, derived_seed(config.seed, 101))

    cap = 10.0 ** (dmtmod.SNR_CAP_DB / 10.0)
    gap_db = loading.resolved_gap_db()
    profiles = []
    tables = []
    for idx in range(n_channels):
        rx = _dmt_rx_frame(probe_rx[idx], config)
        g, dead = dmtmod.one_tap_estimate(rx, known[idx], cfg)
        eq = dmtmod._disassemble_symbols(rx, cfg) * g
        err_var = np.mean(np.abs(eq - known[idx]) ** 2, axis=0)
        with np.errstate(divide="ignore"):
            snr = np.where(err_var > 0, 1.0 / np.maximum(err_var, 1.0 / cap), cap)
        snr = np.where(dead, 0.0, np.minimum(snr, cap))
        profile = dmtmod.SnrProfile(snr=snr, probe_symbols=loading.probe_symbols)
        profiles.append(profile)
        tables.append(
            dmtmod.levin_campello_load(
                profile, gap_db, mode=loading.mode, target_bits=loading.target_bits
            )
        )
    return profiles, tables


def _run_dmt(config):
    n_channels = config.plan.channel_count
    cfg = config.dmt
    _profiles, tables = dmt_probe_and_load(config)

    # Payload phase: each frame carries a known preamble (for per-frame one-tap
    # gains) followed by the PRBS payload. All channels share the frame length.
    n_payload_symbols = None
    for table in tables:
        if table.bits_per_symbol > 0:
            n_payload_symbols = min(
                max(1, config.bit_budget // table.bits_per_symbol),
                MAX_PAYLOAD_SYMBOLS,
            )
            break
    if n_payload_symbols is None:
        return [
            ChannelResult(channel=idx, report=None, error="no carriers loadable")
            for idx in range(n_channels)
        ]

    payload_bits = []
    payload_tx = []
    preambles = []
    for idx in range(n_channels):
        preamble = _dmt_preamble(config, idx)
        preambles.append(preamble)
        per_symbol = tables[idx].bits_per_symbol
        if per_symbol == 0:
            payload_bits.append(None)
            freq = np.zeros((n_payload_symbols, cfg.n_active), dtype=complex)
        else:
            n_bits = n_payload_symbols * per_symbol
            from .sigcore import prbs_generate, prbs_seed_from_int

            seed_bits = prbs_seed_from_int(
                cfg.prbs_order, derived_seed(config.seed, _SEED_PRBS, idx)
            )
            bits = prbs_generate(cfg.prbs_order, n_bits, seed_bits)
            payload_bits.append(bits)
            freq = dmtmod._bits_to_carrier_matrix(bits, tables[idx], cfg)
        payload_tx.append(_dmt_tx_frame(np.vstack([preamble, freq]), config))

    payload_rx = _transmit_composite(payload_tx, config, derived_seed(config.seed, 102))

    results = []
    pre_len = DMT_PREAMBLE_SYMBOLS * cfg.symbol_length
    for idx in range(n_channels):
        table = tables[idx]
        if payload_bits[idx] is None:
            results.append(
                ChannelResult(channel=idx, report=None, error="no carriers loadable")
            )
            continue
        rx = _dmt_rx_frame(payload_rx[idx], config)
        rx_pre = Waveform(rx.samples[:pre_len], cfg.sample_rate_hz)
        rx_pay = Waveform(rx.samples[pre_len:], cfg.sample_rate_hz)
        gains, _dead = dmtmod.one_tap_estimate(rx_pre, preambles[idx], cfg)
        rx_bits = dmtmod.dmt_demodulate(rx_pay, table, cfg, gains)
        report = ber_count(payload_bits[idx], rx_bits, HD_FEC_LIMIT)
        rate_gbps = table.bits_per_symbol * cfg.dmt_symbol_rate / 1e9
        results.append(
            ChannelResult(
                channel=idx,
                report=report,
                achieved_bits_per_symbol=float(table.bits_per_symbol),
                achieved_rate_gbps=float(rate_gbps),
            )
        )
    return results


def run_link(config):
    """Run the full end-to-end chain and return one ChannelResult per channel.

    Deterministic for a fixed config (seeds included). DMT mode runs a
    probe-and-load phase first and records the achieved rate.
    """
    if config.format == "pam4":
        return _run_pam4(config)
    return _run_dmt(config)


def dmt_receive_waveforms(tx_waveforms, config, base_seed):
    """Expose the shared optical path as a per-channel waveform evaluator
    (used by probing helpers and tests)."""
    return _transmit_composite(tx_waveforms, config, base_seed)
