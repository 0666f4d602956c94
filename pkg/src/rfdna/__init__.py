"""RF-DNA fingerprinting of OFDM transmitters under Rayleigh fading.

Preamble synthesis, channel simulation, timing sync, LS/LMMSE/Nelder-Mead
channel estimation, ZF/MMSE equalization, Gabor-surface fingerprints, and
MDA/ML + GRLVQI classification, plus the Monte-Carlo experiment harness.
"""

from .channel import (ChannelProfile, ChannelRealization, PROFILE_L2, PROFILE_L3,
                      PROFILE_L5, add_awgn, apply_channel, draw_channel, tap_variance)
from .chanest import (ChannelEstimate, NmConfig, build_nm_costs, ls_estimate,
                      lmmse_estimate, nelder_mead_minimize, nm_estimate, squared_error)
from .classify import (GrlvqiHyper, GrlvqiModel, MdaModel, grlvqi_classify,
                       grlvqi_fit, mda_fit, ml_classify)
from .equalize import EqualizerChoice, mmse_equalize, zf_equalize
from .fingerprint import (Fingerprint, GaborConfig, TFSurface, extract_fingerprint,
                          gabor_coefficients, to_surface)
from .harness import (ConfusionMatrix, ExperimentConfig, run_classification_experiment,
                      run_estimator_comparison, select_candidates)
from .signal_model import (ComplexBaseband, EmitterProfile, REFERENCE_RADIOS,
                           apply_emitter, generate_preamble, lts_frequency_reference)
from .sync import TimingEstimate, estimate_time_offset, timing_metric

__version__ = "0.1.0"
