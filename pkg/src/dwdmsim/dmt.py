"""DMT transceiver: Hermitian-symmetric DFT multicarrier modulation with
cyclic prefix and clipping, per-subcarrier QAM, one-tap equalization, SNR
probing and Levin-Campello bit/power loading."""

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcinv

from .errors import FramingError, InfeasibleError, ParameterError, UnsupportedOrderError
from .sigcore import Waveform

SNR_CAP_DB = 60.0  # probe estimates are reported no higher than this
MAX_BITS_PER_CARRIER = 8


@dataclass(frozen=True)
class DmtConfig:
    fft_size: int = 512
    cp_length: int = 16
    sample_rate_hz: float = 50e9
    active_start: int = 1
    active_stop: int = 255  # inclusive; must stay below fft_size // 2
    clipping_ratio: float = 3.2  # peak/rms; inf disables clipping
    prbs_order: int = 15

    def __post_init__(self):
        if self.cp_length >= self.fft_size:
            raise ParameterError("cp_length must be < fft_size")
        if not (1 <= self.active_start <= self.active_stop < self.fft_size // 2):
            raise ParameterError(
                "active subcarriers must lie in [1, fft_size/2 - 1] (no DC, no Nyquist)"
            )

    @property
    def active_carriers(self):
        return np.arange(self.active_start, self.active_stop + 1)

    @property
    def n_active(self):
        return self.active_stop - self.active_start + 1

    @property
    def symbol_length(self):
        return self.fft_size + self.cp_length

    @property
    def dmt_symbol_rate(self):
        return self.sample_rate_hz / self.symbol_length

    def carrier_frequencies(self):
        return self.active_carriers * self.sample_rate_hz / self.fft_size


@dataclass(frozen=True)
class BitLoadingTable:
    """Per-active-subcarrier bit and power allocation."""

    bits: np.ndarray  # int, one entry per active carrier
    power: np.ndarray  # float, mean 1.0 over loaded carriers

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=int))
        object.__setattr__(self, "power", np.asarray(self.power, dtype=float))
        if self.bits.size != self.power.size:
            raise ParameterError("bits and power must have equal length")
        if np.any(self.bits < 0) or np.any(self.bits > MAX_BITS_PER_CARRIER):
            raise ParameterError(f"bits must lie in [0, {MAX_BITS_PER_CARRIER}]")
        if np.any((self.bits == 0) & (self.power != 0)):
            raise ParameterError("unloaded carriers must carry zero power")

    @property
    def bits_per_symbol(self):
        return int(self.bits.sum())

    def serialize(self, path, active_start=1):
        """Write the table as text rows: subcarrier_index bits power."""
        with open(path, "w") as fh:
            fh.write("# subcarrier_index bits power\n")
            for i, (b, p) in enumerate(zip(self.bits, self.power)):
                fh.write(f"{active_start + i} {b} {p:.12g}\n")

    @classmethod
    def deserialize(cls, path):
        rows = np.loadtxt(path, comments="#", ndmin=2)
        return cls(bits=rows[:, 1].astype(int), power=rows[:, 2])


@dataclass(frozen=True)
class SnrProfile:
    snr: np.ndarray  # linear, one entry per active carrier
    probe_symbols: int

    def __post_init__(self):
        object.__setattr__(self, "snr", np.asarray(self.snr, dtype=float))
        if np.any(self.snr < 0):
            raise ParameterError("SNR estimates must be >= 0")


def _gray_codes(nbits):
    idx = np.arange(1 << nbits)
    return idx ^ (idx >> 1)


def _pam_axis(nbits):
    """Gray-coded PAM axis: returns (levels indexed by bit value, gray codes
    indexed by position)."""
    n = 1 << nbits
    gray = _gray_codes(nbits)
    levels_by_position = 2 * np.arange(n) - (n - 1)
    levels_by_bits = np.empty(n, dtype=float)
    levels_by_bits[gray] = levels_by_position
    return levels_by_bits, gray


def _split_bits(order_bits):
    bi = (order_bits + 1) // 2
    bq = order_bits // 2
    return bi, bq


def constellation_scale(order_bits):
    """Unit-average-energy normalization for the rectangular Gray constellation."""
    bi, bq = _split_bits(order_bits)
    li, lq = 1 << bi, 1 << bq
    energy = (li * li - 1) / 3.0 + (lq * lq - 1) / 3.0
    return np.sqrt(energy)


def qam_map(bits, order_bits):
    """Gray-coded QAM, square for even orders and rectangular for odd ones,
    normalized to unit average symbol energy."""
    if not (1 <= order_bits <= 8):
        raise UnsupportedOrderError("order_bits must be in [1, 8]")
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % order_bits:
        raise FramingError(f"bit count must be divisible by {order_bits}")
    groups = bits.reshape(-1, order_bits)
    bi, bq = _split_bits(order_bits)
    weights_i = 1 << np.arange(bi - 1, -1, -1)
    vi = groups[:, :bi] @ weights_i
    levels_i, _ = _pam_axis(bi)
    re = levels_i[vi]
    if bq:
        weights_q = 1 << np.arange(bq - 1, -1, -1)
        vq = groups[:, bi:] @ weights_q
        levels_q, _ = _pam_axis(bq)
        im = levels_q[vq]
    else:
        im = np.zeros_like(re)
    return (re + 1j * im) / constellation_scale(order_bits)


def qam_demap(symbols, order_bits):
    """Nearest-point slicing on the rectangular grid, inverse Gray mapping."""
    if not (1 <= order_bits <= 8):
        raise UnsupportedOrderError("order_bits must be in [1, 8]")
    s = np.asarray(symbols, dtype=complex) * constellation_scale(order_bits)
    bi, bq = _split_bits(order_bits)

    def axis_bits(values, nbits):
        n = 1 << nbits
        _, gray = _pam_axis(nbits)
        pos = np.clip(np.round((values + (n - 1)) / 2.0).astype(int), 0, n - 1)
        codes = gray[pos]
        shifts = np.arange(nbits - 1, -1, -1)
        return ((codes[:, None] >> shifts) & 1).astype(np.uint8)

    out = [axis_bits(s.real, bi)]
    if bq:
        out.append(axis_bits(s.imag, bq))
    return np.concatenate(out, axis=1).reshape(-1)


def constellation_points(order_bits):
    """All points of the order's constellation, indexed by bit value."""
    n = 1 << order_bits
    shifts = np.arange(order_bits - 1, -1, -1)
    bits = ((np.arange(n)[:, None] >> shifts) & 1).astype(np.uint8)
    return qam_map(bits.reshape(-1), order_bits)


def _assemble_symbols(freq_symbols, config, clip=True):
    """Inverse-DFT a (n_symbols, n_active) matrix of loaded-carrier values into
    a real time-domain waveform with cyclic prefix and optional clipping."""
    n_sym = freq_symbols.shape[0]
    spectrum = np.zeros((n_sym, config.fft_size), dtype=complex)
    spectrum[:, config.active_carriers] = freq_symbols
    spectrum[:, config.fft_size - config.active_carriers] = np.conj(freq_symbols)
    time = np.fft.ifft(spectrum, axis=1)
    if np.max(np.abs(time.imag)) > 1e-9 * max(np.std(time.real), 1e-30):
        raise ParameterError("Hermitian symmetry violated in assembly")
    time = time.real
    with_cp = np.concatenate([time[:, -config.cp_length :], time], axis=1)
    signal = with_cp.reshape(-1)
    if clip and np.isfinite(config.clipping_ratio):
        limit = config.clipping_ratio * np.sqrt(np.mean(signal**2))
        signal = np.clip(signal, -limit, limit)
    return Waveform(signal, config.sample_rate_hz)


def _disassemble_symbols(waveform, config):
    """Strip cyclic prefixes and DFT back to (n_symbols, n_active)."""
    n = waveform.samples.size
    if n % config.symbol_length:
        raise FramingError(
            f"waveform length {n} is not a multiple of {config.symbol_length}"
        )
    blocks = waveform.samples.reshape(-1, config.symbol_length)[:, config.cp_length :]
    spectrum = np.fft.fft(blocks, axis=1)
    return spectrum[:, config.active_carriers]


def _bits_to_carrier_matrix(bits, table, config):
    bits = np.asarray(bits, dtype=np.uint8)
    per_symbol = table.bits_per_symbol
    if per_symbol == 0:
        raise FramingError("loading table carries zero bits per symbol")
    if bits.size % per_symbol:
        raise FramingError(
            f"bit count {bits.size} is not a multiple of the per-symbol capacity {per_symbol}"
        )
    n_sym = bits.size // per_symbol
    matrix = bits.reshape(n_sym, per_symbol)
    out = np.zeros((n_sym, config.n_active), dtype=complex)
    col = 0
    for k in range(config.n_active):
        b = int(table.bits[k])
        if b == 0:
            continue
        chunk = matrix[:, col : col + b].reshape(-1)
        out[:, k] = qam_map(chunk, b) * np.sqrt(table.power[k])
        col += b
    return out


def dmt_modulate(bits, table, config):
    """Map bits onto loaded subcarriers, inverse-DFT with Hermitian symmetry,
    prepend the cyclic prefix and clip at clipping_ratio x rms."""
    return _assemble_symbols(_bits_to_carrier_matrix(bits, table, config), config)


def dmt_demodulate(waveform, table, config, eq):
    """Strip CP, DFT, one-tap equalize, slice each loaded carrier."""
    rx = _disassemble_symbols(waveform, config) * np.asarray(eq, dtype=complex)
    pieces = []
    for k in range(config.n_active):
        b = int(table.bits[k])
        if b == 0:
            continue
        scaled = rx[:, k] / np.sqrt(table.power[k])
        pieces.append(qam_demap(scaled, b).reshape(rx.shape[0], b))
    if not pieces:
        raise FramingError("loading table carries zero bits per symbol")
    return np.concatenate(pieces, axis=1).reshape(-1)


def one_tap_estimate(rx_training, known_training, config):
    """Per-subcarrier gains, averaged over training symbols as known/received.

    Carriers whose received magnitude falls below 1e-12 of the rms get gain 0
    (flagged as dead). Returns (gains, dead_mask).
    """
    rx = _disassemble_symbols(rx_training, config)
    known = np.atleast_2d(np.asarray(known_training, dtype=complex))
    if known.shape != rx.shape:
        raise FramingError(
            f"training shape mismatch: known {known.shape} vs received {rx.shape}"
        )
    floor = 1e-12 * np.sqrt(np.mean(np.abs(rx) ** 2))
    safe = np.abs(rx) > floor
    ratio = np.where(safe, known / np.where(safe, rx, 1.0), 0.0)
    counts = safe.sum(axis=0)
    gains = np.where(counts > 0, ratio.sum(axis=0) / np.maximum(counts, 1), 0.0)
    dead = counts == 0
    gains = np.where(dead, 0.0, gains)
    return gains, dead


def probe_symbols_qpsk(config, probe_symbols, rng_seed):
    """Deterministic QPSK probe matrix (probe_symbols x n_active), unit power."""
    rng = np.random.default_rng(rng_seed)
    pts = (np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0))
    idx = rng.integers(0, 4, size=(probe_symbols, config.n_active))
    return pts[idx]


def snr_probe(link, config, probe_symbols, rng_seed):
    """Estimate the per-subcarrier SNR through an end-to-end channel evaluator.

    ``link`` maps a transmitted Waveform to the received Waveform (same length,
    frame-aligned). Uniform QPSK probes on all active carriers; the SNR is the
    constellation-power-to-error-variance ratio after one-tap equalization,
    capped at 60 dB.
    """
    if probe_symbols < 8:
        raise ParameterError("probe_symbols must be >= 8")
    profile, _gains = probe_with_gains(link, config, probe_symbols, rng_seed)
    return profile


def probe_with_gains(link, config, probe_symbols, rng_seed):
    """SNR probe that also returns the one-tap gains for payload equalization."""
    known = probe_symbols_qpsk(config, probe_symbols, rng_seed)
    tx = _assemble_symbols(known, config)
    rx = link(tx)
    gains, dead = one_tap_estimate(rx, known, config)
    eq = _disassemble_symbols(rx, config) * gains
    err = eq - known
    err_var = np.mean(np.abs(err) ** 2, axis=0)
    sig = np.mean(np.abs(known) ** 2, axis=0)
    cap = 10.0 ** (SNR_CAP_DB / 10.0)
    with np.errstate(divide="ignore"):
        snr = np.where(err_var > 0, sig / np.maximum(err_var, sig / cap), cap)
    snr = np.where(dead, 0.0, np.minimum(snr, cap))
    return SnrProfile(snr=snr, probe_symbols=probe_symbols), gains


def gap_from_target_ber(target_ber):
    """Linear SNR gap of the QAM gap approximation for a target error rate."""
    if not (0 < target_ber < 0.5):
        raise ParameterError("target_ber must be in (0, 0.5)")
    # Q^{-1}(p) via erfcinv: Q(x) = erfc(x/sqrt(2))/2
    qinv = np.sqrt(2.0) * erfcinv(2.0 * target_ber / 4.0)
    return float(qinv**2 / 3.0)


def _required_power(bits, snr, gap):
    return gap * (2.0**bits - 1.0) / snr


def levin_campello_load(profile, gap_db, mode="rate_adaptive", target_bits=None, power_budget=None):
    """Integer-bit loading by greedy incremental allocation.

    The next bit always goes to the carrier with the smallest incremental
    power (gap * 2^b / snr). ``rate_adaptive`` maximizes total bits under the
    transmit power actually available -- one unit per *loaded* carrier, since
    unloaded carriers radiate nothing and their share is not redistributed --
    so the budget is tightened iteratively until it matches the loaded count.
    ``margin_adaptive`` hits ``target_bits`` with minimum power. Powers are
    then normalized to mean 1.0 over loaded carriers.
    """
    if gap_db < 0:
        raise ParameterError("gap_db must be >= 0")
    snr = np.asarray(profile.snr, dtype=float)
    n = snr.size
    gap = 10.0 ** (gap_db / 10.0)
    usable = snr > 0

    import heapq

    def greedy_fill(budget):
        bits = np.zeros(n, dtype=int)
        heap = [(gap * 1.0 / snr[k], k) for k in range(n) if usable[k]]
        heapq.heapify(heap)
        total = 0.0
        while heap:
            dp, k = heapq.heappop(heap)
            if total + dp > budget:
                break
            total += dp
            bits[k] += 1
            if bits[k] < MAX_BITS_PER_CARRIER:
                heapq.heappush(heap, (gap * 2.0 ** bits[k] / snr[k], k))
        return bits, total

    bits = np.zeros(n, dtype=int)
    power = np.zeros(n)
    total_power = 0.0

    if mode == "rate_adaptive":
        budget = float(n) if power_budget is None else float(power_budget)
        while True:
            bits, total_power = greedy_fill(budget)
            loaded_count = int(np.count_nonzero(bits))
            available = loaded_count if power_budget is None else min(
                float(power_budget), float(loaded_count)
            )
            if loaded_count == 0 or total_power <= available + 1e-9:
                break
            budget = available
    elif mode == "margin_adaptive":
        if target_bits is None or target_bits < 0:
            raise ParameterError("margin_adaptive needs target_bits >= 0")
        heap = [(gap * 1.0 / snr[k], k) for k in range(n) if usable[k]]
        heapq.heapify(heap)
        total_bits = 0
        while total_bits < target_bits:
            if not heap:
                raise InfeasibleError(
                    f"target {target_bits} bits infeasible; at most {total_bits} achievable",
                    max_achievable_bits=total_bits,
                )
            dp, k = heapq.heappop(heap)
            total_power += dp
            bits[k] += 1
            total_bits += 1
            if bits[k] < MAX_BITS_PER_CARRIER:
                heapq.heappush(heap, (gap * 2.0 ** bits[k] / snr[k], k))
    else:
        raise ParameterError(f"unknown loading mode {mode!r}")

    loaded = bits > 0
    power[loaded] = _required_power(bits[loaded], snr[loaded], gap)
    if loaded.any():
        power *= loaded.sum() / power.sum()
    return BitLoadingTable(bits=bits, power=power)


def loading_total_power(bits, snr, gap_linear):
    """Unnormalized total power of an allocation under the gap approximation."""
    bits = np.asarray(bits, dtype=float)
    snr = np.asarray(snr, dtype=float)
    mask = bits > 0
    return float(np.sum(gap_linear * (2.0 ** bits[mask] - 1.0) / snr[mask]))
