"""Core signal types, PRBS generation, spectral filtering, noise and BER metrics.

Conventions used everywhere in this package:

* forward DFT is ``sum x[n] exp(-j 2 pi k n / N)`` (numpy default, unnormalized),
  the inverse carries the ``1/N``;
* spectral filtering is circular convolution -- callers that need linear
  convolution semantics must provide their own guard samples;
* all randomness goes through ``numpy.random.default_rng`` (PCG64) with an
  explicit integer seed, so every experiment is bit-reproducible.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import AlignmentError, InvalidSeedError, ParameterError, UnsupportedOrderError

C_LIGHT = 299792458.0  # m/s

# KR4 FEC input-BER limit used as the PAM4 pass criterion.
KR4_FEC_LIMIT = 5.2e-5
# 7% overhead HD-FEC limit used as the DMT pass criterion.
HD_FEC_LIMIT = 3.8e-3

C_BAND_MIN = 1.52e-6
C_BAND_MAX = 1.58e-6


@dataclass(frozen=True)
class Waveform:
    """Real-valued sampled electrical signal."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be > 0")
        if self.samples.size < 1:
            raise ParameterError("waveform needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("waveform samples must be finite")

    @property
    def n_samples(self):
        return int(self.samples.size)

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    @property
    def mean_power(self):
        return float(np.mean(self.samples**2))

    def with_samples(self, samples):
        return replace(self, samples=np.asarray(samples, dtype=float))


@dataclass(frozen=True)
class OpticalField:
    """Complex-envelope optical signal; |sample|^2 is instantaneous power in W."""

    samples: np.ndarray
    sample_rate: float
    center_wavelength: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=complex))
        if self.sample_rate <= 0:
            raise ParameterError("sample_rate must be > 0")
        if not (C_BAND_MIN <= self.center_wavelength <= C_BAND_MAX):
            raise ParameterError(
                f"center_wavelength {self.center_wavelength} outside C-band "
                f"[{C_BAND_MIN}, {C_BAND_MAX}]"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("field samples must be finite")

    @property
    def n_samples(self):
        return int(self.samples.size)

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    @property
    def mean_power(self):
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples):
        return replace(self, samples=np.asarray(samples, dtype=complex))


@dataclass(frozen=True)
class BerReport:
    """Bit-error-rate tally against a FEC threshold."""

    bits_compared: int
    bit_errors: int
    ber: float
    threshold: float
    passed: bool


# Maximal-length feedback polynomials x^n + x^k + 1, keyed by n.
_PRBS_TAPS = {7: 6, 15: 14, 23: 18, 31: 28}


def prbs_generate(order, length, seed):
    """Generate a maximal-length PRBS from a Fibonacci LFSR.

    ``seed`` is the initial register content, an array of ``order`` bits with
    at least one nonzero bit. Output bit i is the register's last stage before
    shift i; the feedback bit is ``s[n-1] ^ s[k-1]`` for polynomial
    ``x^n + x^k + 1``.
    """
    if order not in _PRBS_TAPS:
        raise UnsupportedOrderError(f"PRBS order {order} not in {sorted(_PRBS_TAPS)}")
    if length < 1:
        raise ParameterError("length must be >= 1")
    seed = np.asarray(seed, dtype=np.uint8)
    if seed.size != order:
        raise InvalidSeedError(f"seed must have exactly {order} bits")
    if not np.any(seed):
        raise InvalidSeedError("all-zero seed locks the LFSR at zero")

    tap = _PRBS_TAPS[order]
    period = (1 << order) - 1
    n_gen = min(length, period)
    state = [int(b) & 1 for b in seed]
    out = np.empty(n_gen, dtype=np.uint8)
    for i in range(n_gen):
        o = state[-1]
        fb = state[-1] ^ state[tap - 1]
        out[i] = o
        state = [fb] + state[:-1]
    if length <= period:
        return out
    reps = -(-length // period)
    return np.tile(out, reps)[:length]


def prbs_seed_from_int(order, value):
    """Expand an integer into a valid (nonzero) PRBS seed register."""
    bits = np.array([(value >> i) & 1 for i in range(order)], dtype=np.uint8)
    if not np.any(bits):
        bits[0] = 1
    return bits


def apply_frequency_response(signal, response):
    """Multiply the signal's DFT by ``response(f)`` sampled on the bin grid.

    Circular convolution semantics; length and sample rate are unchanged.
    For real waveforms the response must be conjugate-symmetric for the result
    to be physically real; the residual imaginary part is discarded.
    """
    x = signal.samples
    if x.size < 2:
        raise ParameterError("signal must have at least 2 samples")
    freqs = np.fft.fftfreq(x.size, d=1.0 / signal.sample_rate)
    h = np.asarray(response(freqs), dtype=complex)
    y = np.fft.ifft(np.fft.fft(x) * h)
    if isinstance(signal, Waveform):
        return signal.with_samples(y.real)
    return signal.with_samples(y)


def gaussian_lowpass_response(bandwidth_3db, order=1, center_offset=0.0):
    """(Super-)Gaussian amplitude response with the 3-dB point at the stated
    offset from ``center_offset``; zero phase. ``order`` = 1 is Gaussian."""
    if bandwidth_3db is None or not np.isfinite(bandwidth_3db):
        return lambda f: np.ones_like(np.asarray(f, dtype=float), dtype=complex)
    if bandwidth_3db <= 0:
        raise ParameterError("bandwidth_3db must be > 0")

    def response(f):
        u = 2.0 * (np.asarray(f, dtype=float) - center_offset) / bandwidth_3db
        return np.exp(-0.5 * np.log(2.0) * u ** (2 * order)).astype(complex)

    return response


def add_awgn(signal, sigma, rng_seed):
    """Add white Gaussian noise, std ``sigma`` per real dimension."""
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    if sigma == 0:
        return signal
    rng = np.random.default_rng(rng_seed)
    if isinstance(signal, Waveform):
        noise = rng.normal(0.0, sigma, signal.samples.size)
    else:
        noise = rng.normal(0.0, sigma, signal.samples.size) + 1j * rng.normal(
            0.0, sigma, signal.samples.size
        )
    return signal.with_samples(signal.samples + noise)


def ber_count(tx, rx, threshold=KR4_FEC_LIMIT):
    """Compare two bit sequences and tally a :class:`BerReport`."""
    tx = np.asarray(tx, dtype=np.uint8)
    rx = np.asarray(rx, dtype=np.uint8)
    if tx.size != rx.size:
        raise AlignmentError(f"length mismatch: {tx.size} vs {rx.size}")
    if tx.size == 0:
        raise AlignmentError("cannot compare empty sequences")
    errors = int(np.count_nonzero(tx != rx))
    ber = errors / tx.size
    return BerReport(
        bits_compared=int(tx.size),
        bit_errors=errors,
        ber=ber,
        threshold=threshold,
        passed=ber < threshold,
    )


def derived_seed(base, *tags):
    """Stable 32-bit child seed derived from a base seed and integer tags."""
    ss = np.random.SeedSequence([int(base) & 0x7FFFFFFF, *[int(t) for t in tags]])
    return int(ss.generate_state(1)[0])


def wilson_upper_bound(errors, n, z=1.959963984540054):
    """Upper end of the 95% Wilson score interval for a BER estimate."""
    if n <= 0:
        return 1.0
    p = errors / n
    denom = 1.0 + z * z / n
    center = p + z * z / (2 * n)
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return float((center + half) / denom)
