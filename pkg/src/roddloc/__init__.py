"""roddloc: distributed ranging and localization over random on-off signatures.

Nodes in a planar wireless network broadcast quantized position estimates
using per-node random ternary on-off codebooks.  Each receiver decodes the
superposition of its neighbors' codewords with a belief-propagation sparse
recovery decoder, turns the recovered link amplitudes into range estimates,
and solves a relaxed multilateration problem.  Iterating the protocol spreads
position knowledge outward from a small set of anchor nodes until the whole
network is localized.

Subpackages
-----------
netmodel  -- random geometry, fading marks, neighbor statistics
codec     -- coordinate quantizer and ternary on-off codebooks
channel   -- per-receiver observation synthesis (superposition + noise)
decoder   -- message-passing support recovery and amplitude refinement
locator   -- range extraction and convex multilateration
sim       -- the iterative two-frame broadcast protocol
cli       -- batch front-end emitting CSV results
"""

from __future__ import annotations

__version__ = "0.1.0"

from .netmodel import (
    AnchorLayout,
    Network,
    NetworkConfig,
    channel_coefficient,
    generate_network,
    interference_variance,
    mean_neighbor_count,
    neighbor_amplitude_cdf,
    neighbor_amplitude_pdf,
)
from .codec import (
    Codebook,
    CodebookSet,
    build_sparse_vector,
    dequantize,
    generate_codebook,
    quantization_step,
    quantize,
)
from .channel import Observation, effective_snr, observe
from .decoder import DecodeOutput, decode_bp, oracle_decode, refine_amplitudes
from .locator import (
    LocationEstimate,
    RangeConstraint,
    consistency_error,
    estimate_distance,
    hinge_objective,
    solve_location,
)
from .sim import IterationRecord, SimConfig, average_error, count_within, run_simulation

__all__ = [
    "AnchorLayout",
    "Codebook",
    "CodebookSet",
    "DecodeOutput",
    "IterationRecord",
    "LocationEstimate",
    "Network",
    "NetworkConfig",
    "Observation",
    "RangeConstraint",
    "SimConfig",
    "average_error",
    "build_sparse_vector",
    "channel_coefficient",
    "consistency_error",
    "count_within",
    "decode_bp",
    "dequantize",
    "effective_snr",
    "estimate_distance",
    "generate_codebook",
    "generate_network",
    "hinge_objective",
    "interference_variance",
    "mean_neighbor_count",
    "neighbor_amplitude_cdf",
    "neighbor_amplitude_pdf",
    "observe",
    "oracle_decode",
    "quantization_step",
    "quantize",
    "refine_amplitudes",
    "run_simulation",
    "solve_location",
]
