"""Desk-scale physical-layer simulator for 400G-class inter-data-center WDM
links: PAM4 with pre/post equalization and optical dispersion compensation,
and DMT with adaptive bit/power loading and VSB filtering, over a dispersive
amplified fiber channel."""

from .sigcore import (
    BerReport,
    HD_FEC_LIMIT,
    KR4_FEC_LIMIT,
    OpticalField,
    Waveform,
    add_awgn,
    apply_frequency_response,
    ber_count,
    prbs_generate,
)
from .fiber import (
    AmplifierSpec,
    FiberSpec,
    FrontEndSpec,
    OpticalFilterSpec,
    chromatic_dispersion,
    edfa,
    intensity_modulate,
    optical_filter,
    photodiode,
    tdcm,
)
from .dmt import BitLoadingTable, DmtConfig, SnrProfile, levin_campello_load
from .pam4 import Pam4RxConfig, Pam4TxConfig
from .wdm import ChannelPlan, LinkConfig, demultiplex, multiplex, run_link

__version__ = "0.1.0"
