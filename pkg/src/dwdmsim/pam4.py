"""PAM4 transmitter/receiver DSP: Gray mapping, level adjustment, 3-tap
pre-equalization, LMS-adapted FFE-DFE and threshold demapping."""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DivergenceError, FramingError, ParameterError
from .sigcore import prbs_generate, prbs_seed_from_int

NOMINAL_LEVELS = (-3.0, -1.0, 1.0, 3.0)
NOMINAL_THRESHOLDS = (-2.0, 0.0, 2.0)

# Gray map: bit pair -> level index, and its inverse.
_GRAY_PAIR_TO_INDEX = {(0, 0): 0, (0, 1): 1, (1, 1): 2, (1, 0): 3}
_INDEX_TO_GRAY_PAIR = {v: k for k, v in _GRAY_PAIR_TO_INDEX.items()}


@dataclass(frozen=True)
class Pam4TxConfig:
    baud_hz: float = 25.78125e9
    pre_eq_taps: tuple = (0.0, 1.0, 0.0)
    levels: tuple = NOMINAL_LEVELS
    level_adjustment: tuple = (0.0, 0.0, 0.0, 0.0)
    prbs_order: int = 15

    def __post_init__(self):
        if len(self.pre_eq_taps) != 3:
            raise ParameterError("pre_eq_taps must have exactly 3 entries")
        t0, t1, t2 = (abs(t) for t in self.pre_eq_taps)
        if t1 < t0 or t1 < t2:
            raise ParameterError("pre-equalizer center tap must dominate")
        if not all(a < b for a, b in zip(self.levels, self.levels[1:])):
            raise ParameterError("levels must be strictly increasing")


@dataclass(frozen=True)
class Pam4RxConfig:
    ffe_taps: int = 15
    dfe_taps: int = 3
    lms_step: float = 1e-3
    training_symbols: int = 4000
    thresholds: tuple = NOMINAL_THRESHOLDS

    def __post_init__(self):
        if self.ffe_taps % 2 == 0:
            raise ParameterError("ffe_taps must be odd")
        if self.lms_step < 0:
            raise ParameterError("lms_step must be >= 0")
        if not all(a < b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ParameterError("thresholds must be strictly increasing")


def pam4_map(bits, levels=NOMINAL_LEVELS):
    """Gray-map consecutive bit pairs onto four amplitude levels."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 2:
        raise FramingError("bit count must be even for PAM4")
    pairs = bits.reshape(-1, 2)
    # Gray decode: index = 2*b0 + (b0 XOR b1)
    idx = 2 * pairs[:, 0] + (pairs[:, 0] ^ pairs[:, 1])
    return np.asarray(levels, dtype=float)[idx]


def pam4_demap(symbols, thresholds=NOMINAL_THRESHOLDS, levels=NOMINAL_LEVELS):
    """Slice against the thresholds and inverse-Gray map to bit pairs.

    A value exactly equal to a threshold resolves to the lower region.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    if not np.all(np.diff(thresholds) > 0):
        raise ParameterError("thresholds must be strictly increasing")
    x = np.asarray(symbols, dtype=float)
    # region index = number of thresholds strictly below x (ties go low)
    idx = np.searchsorted(thresholds, x, side="left")
    b0 = (idx >= 2).astype(np.uint8)
    b1 = (b0 ^ (idx % 2)).astype(np.uint8)
    return np.column_stack([b0, b1]).reshape(-1)


def level_adjust(levels, adjustment):
    """Element-wise level offsets (transmit-side eye shaping)."""
    if len(levels) != 4 or len(adjustment) != 4:
        raise ParameterError("levels and adjustment must both have 4 entries")
    out = tuple(l + a for l, a in zip(levels, adjustment))
    if not all(a < b for a, b in zip(out, out[1:])):
        raise ParameterError(f"adjusted levels {out} are not strictly increasing")
    return out


def pre_equalize(symbols, taps):
    """3-tap linear pre-equalization centered on the main tap; output rescaled
    so its peak magnitude equals the input's (DAC range preservation)."""
    if len(taps) != 3:
        raise ParameterError("taps must have exactly 3 entries")
    x = np.asarray(symbols, dtype=float)
    y = np.convolve(x, np.asarray(taps, dtype=float), mode="full")[1 : x.size + 1]
    peak = np.max(np.abs(y))
    if peak > 0:
        y *= np.max(np.abs(x)) / peak
    return y


@njit(cache=True)
def _lms_ffe_dfe(x, ref, levels, n_ffe, n_dfe, step, n_train):  # pragma: no cover
    n = x.size
    half = n_ffe // 2
    w = np.zeros(n_ffe)
    w[half] = 1.0
    d = np.zeros(n_dfe)
    fb = np.zeros(n_dfe)
    out = np.empty(n)
    for i in range(n):
        y = 0.0
        for t in range(n_ffe):
            y += w[t] * x[(i + half - t) % n]
        for t in range(n_dfe):
            y -= d[t] * fb[t]
        out[i] = y
        if i < n_train:
            target = ref[i]
        else:
            best = levels[0]
            bestdist = abs(y - levels[0])
            for lv in levels[1:]:
                dist = abs(y - lv)
                if dist < bestdist:
                    bestdist = dist
                    best = lv
            target = best
        e = y - target
        if step > 0.0:
            for t in range(n_ffe):
                w[t] -= step * e * x[(i + half - t) % n]
            for t in range(n_dfe):
                d[t] += step * e * fb[t]
        for t in range(n_dfe - 1, 0, -1):
            fb[t] = fb[t - 1]
        fb[0] = target
    return out, w, d


def ffe_dfe_equalize(received, reference, config):
    """Symbol-spaced FFE plus DFE, LMS-trained against ``reference`` for the
    first ``training_symbols`` symbols, decision-directed afterwards.

    ``received`` must already be aligned to ``reference`` (see
    :func:`align_circular`). Returns the soft symbol estimates for the whole
    sequence. Raises :class:`DivergenceError` when training made things worse.
    """
    x = np.asarray(received, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if x.size != ref.size:
        raise ParameterError("received and reference must have equal length")
    n_train = int(config.training_symbols)
    if n_train > ref.size:
        raise ParameterError("training_symbols exceeds reference length")
    levels = np.unique(ref)
    out, w, d = _lms_ffe_dfe(
        x, ref, levels, config.ffe_taps, config.dfe_taps, config.lms_step, n_train
    )
    if config.lms_step > 0 and n_train >= 16:
        tail = slice(n_train // 2, n_train)
        mse_out = float(np.mean((out[tail] - ref[tail]) ** 2))
        mse_in = float(np.mean((x[tail] - ref[tail]) ** 2))
        if not np.isfinite(mse_out) or (mse_out > mse_in and mse_out > 1e-12):
            raise DivergenceError(
                f"equalizer diverged: training MSE {mse_out:.3e} > input MSE {mse_in:.3e}",
                final_mse=mse_out,
            )
    return out


def align_circular(received, reference):
    """Circularly align ``received`` to ``reference`` via FFT cross-correlation.

    Returns (aligned copy, lag). Both inputs are mean-removed for the search.
    """
    x = np.asarray(received, dtype=float)
    r = np.asarray(reference, dtype=float)
    if x.size != r.size:
        raise ParameterError("sequences must have equal length for alignment")
    xc = np.fft.ifft(np.fft.fft(r - r.mean()) * np.conj(np.fft.fft(x - x.mean()))).real
    lag = int(np.argmax(xc))
    return np.roll(x, lag), lag


def normalize_to_reference(received, reference):
    """Remove DC and apply the least-squares scalar gain toward the reference."""
    x = np.asarray(received, dtype=float)
    r = np.asarray(reference, dtype=float)
    xz = x - x.mean()
    rz = r - r.mean()
    denom = float(np.dot(xz, xz))
    g = float(np.dot(xz, rz)) / denom if denom > 0 else 1.0
    return g * xz + r.mean()


def pam4_bits_for_channel(n_bits, prbs_order, seed_value):
    """Deterministic per-channel PRBS payload."""
    seed = prbs_seed_from_int(prbs_order, seed_value)
    return prbs_generate(prbs_order, n_bits, seed)


def midpoint_thresholds(levels):
    """Decision thresholds at the midpoints of adjacent levels."""
    lv = np.asarray(levels, dtype=float)
    return tuple((lv[:-1] + lv[1:]) / 2.0)


def pam4_awgn_ber_theory(snr_linear):
    """Analytic Gray-coded 4-PAM bit error rate vs per-symbol SNR (Es/N0 with
    real noise): BER = (3/4) Q(sqrt(SNR/5))."""
    from scipy.special import erfc

    arg = np.sqrt(np.asarray(snr_linear, dtype=float) / 5.0)
    return 0.75 * 0.5 * erfc(arg / np.sqrt(2.0))
