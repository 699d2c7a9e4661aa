"""Artificial-noise-aided message authentication codes (ANA-MACs).

A clean MAC tag is mapped to bipolar symbols, corrupted with Gaussian noise
of a chosen level and quantized before transmission; the receiver accepts
when the correlation with the tag it recomputes reaches a threshold. The
noise limits what an eavesdropper learns about the key from observed tags.
"""

from .mac_core import (MacParams, SecretKey, Tag, codeword, coding_rate, compute_tag,
                       gen_key)
from .noise_channel import (ChannelParams, NoisyTag, bipolarize, corrupt, decode_packet,
                            encode_packet, make_ana_tag, quantize, snr_params)
from .verifier import (Decision, VerifyConfig, alpha_closed_form, beta_equidistant,
                       beta_random_code, correlation_statistic, optimal_llr_statistic,
                       q_function, verify)
from .bounds import (BoundReport, DistanceDistribution, bi_awgn_capacity, deception_D,
                     delsarte_bound, equidistant_design, equivocation_approx,
                     equivocation_lower_bound, random_code_distribution, sp59_bound)

__all__ = [
    "MacParams", "SecretKey", "Tag", "codeword", "coding_rate", "compute_tag", "gen_key",
    "ChannelParams", "NoisyTag", "bipolarize", "corrupt", "decode_packet", "encode_packet",
    "make_ana_tag", "quantize", "snr_params",
    "Decision", "VerifyConfig", "alpha_closed_form", "beta_equidistant", "beta_random_code",
    "correlation_statistic", "optimal_llr_statistic", "q_function", "verify",
    "BoundReport", "DistanceDistribution", "bi_awgn_capacity", "deception_D",
    "delsarte_bound", "equidistant_design", "equivocation_approx",
    "equivocation_lower_bound", "random_code_distribution", "sp59_bound",
]
