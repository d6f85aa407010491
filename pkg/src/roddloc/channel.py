"""Per-receiver observation synthesis for one broadcast frame.

A receiver hears, during its own silent slots, the superposition of every
transmitting neighbor's codeword scaled by the complex link amplitude, plus
noise.  Dividing the trace by the slot noise standard deviation puts it in
the decoder's normalized form

    received = sqrt(gamma_s) * S_norm @ X + W,

where ``S_norm`` is the stacked neighbor signature matrix divided by
sqrt(frame_length * (1-q) * q), ``X`` holds one complex amplitude per active
neighbor block, and ``W`` has unit complex variance per slot.  The matrix is
stored raw (ternary int8); consumers apply the normalization.

Noise modes: ``analytic`` draws Gaussian slot noise with the closed-form
noise-plus-interference power, ``empirical`` draws unit Gaussian noise and
adds the actual codewords of sub-threshold transmitters.  Both modes scale by
the analytic power so gamma_s keeps a single calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import CodebookSet
from .netmodel import Network, interference_variance

__all__ = [
    "Observation",
    "effective_snr",
    "observe",
    "dump_observation",
    "load_observation",
]

_NOISE_STREAM_TAG = 5


def effective_snr(snr: float, frame_length: int, duty_cycle: float, noise_power: float) -> float:
    """Post-normalization SNR per active column:
    snr * frame_length * (1 - duty_cycle) * duty_cycle / noise_power."""
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    return snr * frame_length * (1.0 - duty_cycle) * duty_cycle / noise_power


@dataclass(eq=False)
class Observation:
    """What one receiver saw during one frame, in decoder-normalized scale."""

    receiver_id: int
    block_map: np.ndarray  # (K,) neighbor ids, one codebook block each
    visible_rows: np.ndarray  # (M,) slot indices the receiver listened on
    signature_matrix: np.ndarray  # (M, K * 2**bits) raw ternary int8
    received: np.ndarray  # (M,) complex128
    gamma_s: float
    noise_power: float  # sigma^2 used for scaling
    bits_per_coord: int
    frame_length: int
    duty_cycle: float

    @property
    def is_empty(self) -> bool:
        return self.block_map.size == 0

    @property
    def block_count(self) -> int:
        return int(self.block_map.size)

    @property
    def column_normalizer(self) -> float:
        """sqrt(frame_length * (1-q) * q): expected column energy of a full frame."""
        return math.sqrt(self.frame_length * (1.0 - self.duty_cycle) * self.duty_cycle)

    def normalized_signature(self) -> np.ndarray:
        return self.signature_matrix.astype(float) / self.column_normalizer


def _noise_rng(noise_key) -> np.random.Generator:
    if isinstance(noise_key, (int, np.integer)):
        key = [int(noise_key)]
    else:
        key = [int(k) for k in noise_key]
    return np.random.default_rng(np.random.SeedSequence([_NOISE_STREAM_TAG] + key))


def observe(
    network: Network,
    books: CodebookSet,
    receiver_id: int,
    transmit_set,
    frame_messages,
    noise_mode: str = "analytic",
    noise_key=0,
) -> Observation:
    """Synthesize one receiver's frame observation.

    ``transmit_set`` is the collection of node ids on air this frame and
    ``frame_messages`` maps each of them to the codeword index it sent.  The
    noise stream is keyed only by ``noise_key``, and the fixed frame-length
    draw happens before any signal accumulation, so changing the transmit
    set changes the signal part but never the noise part.
    """
    if noise_mode not in ("analytic", "empirical"):
        raise ValueError(f"unknown noise mode {noise_mode!r}")
    cfg = network.config
    transmitters = frozenset(int(t) for t in transmit_set)
    for t in transmitters:
        if t not in frame_messages:
            raise ValueError(f"transmitting node {t} has no frame message")

    m_s = books.frame_length
    q = books.duty_cycle
    snr = cfg.nominal_snr
    sigma2 = interference_variance(
        cfg.intensity, q, snr, cfg.neighbor_threshold, cfg.path_loss_exponent
    )
    gamma_s = effective_snr(snr, m_s, q, sigma2)

    rng = _noise_rng(noise_key)
    # One fixed-size draw per frame: unit complex variance split over components.
    noise = (rng.standard_normal(m_s) + 1j * rng.standard_normal(m_s)) / math.sqrt(2.0)
    if noise_mode == "analytic":
        noise = noise * math.sqrt(sigma2)
    amp = math.sqrt(snr)
    alpha = cfg.path_loss_exponent

    neighbors = network.neighbor_sets[receiver_id]
    trace = noise.astype(complex, copy=True)
    positions = network.positions
    rx_pos = positions[receiver_id]
    for i in neighbors:
        if int(i) not in transmitters:
            continue
        d = float(np.hypot(*(positions[i] - rx_pos)))
        u = complex(network.fading[receiver_id, i]) * d ** (-alpha / 2.0)
        trace += amp * u * books.for_node(int(i)).word(frame_messages[int(i)])

    if noise_mode == "empirical":
        neighbor_ids = set(int(i) for i in neighbors)
        for j in sorted(transmitters):
            if j == receiver_id or j in neighbor_ids:
                continue
            d = float(np.hypot(*(positions[j] - rx_pos)))
            if d == 0.0:
                raise ValueError(f"nodes {receiver_id} and {j} are coincident")
            u = complex(network.fading[receiver_id, j]) * d ** (-alpha / 2.0)
            trace += amp * u * books.for_node(j).word(frame_messages[j])

    if receiver_id in transmitters:
        own = books.for_node(int(receiver_id))
        visible = own.off_slots(frame_messages[int(receiver_id)])
    else:
        visible = np.arange(m_s)

    blocks = [books.for_node(int(i)).words.T[visible, :] for i in neighbors]
    if blocks:
        signature = np.concatenate(blocks, axis=1)
    else:
        signature = np.zeros((visible.size, 0), dtype=np.int8)

    return Observation(
        receiver_id=int(receiver_id),
        block_map=np.asarray(neighbors, dtype=int),
        visible_rows=visible,
        signature_matrix=np.ascontiguousarray(signature, dtype=np.int8),
        received=trace[visible] / math.sqrt(sigma2),
        gamma_s=gamma_s,
        noise_power=sigma2,
        bits_per_coord=books.bits_per_coord,
        frame_length=m_s,
        duty_cycle=q,
    )


# ---------------------------------------------------------------------------
# text fixtures (binary-free golden files for decoder tests)

_CHAR_FOR = {-1: "-", 0: "0", 1: "+"}
_VAL_FOR = {"-": -1, "0": 0, "+": 1}


def dump_observation(obs: Observation) -> str:
    lines = [
        f"receiver={obs.receiver_id} bits={obs.bits_per_coord} "
        f"frame={obs.frame_length} duty={obs.duty_cycle!r} "
        f"gamma_s={obs.gamma_s!r} noise_power={obs.noise_power!r}",
        "blocks " + " ".join(str(int(b)) for b in obs.block_map),
        "rows " + " ".join(str(int(r)) for r in obs.visible_rows),
    ]
    for row in obs.signature_matrix:
        lines.append("".join(_CHAR_FOR[int(v)] for v in row))
    for z in obs.received:
        lines.append(f"{z.real!r} {z.imag!r}")
    return "\n".join(lines) + "\n"


def load_observation(text: str) -> Observation:
    lines = text.splitlines()
    fields = dict(item.split("=", 1) for item in lines[0].split())
    block_map = np.array([int(v) for v in lines[1].split()[1:]], dtype=int)
    visible = np.array([int(v) for v in lines[2].split()[1:]], dtype=int)
    m = visible.size
    matrix_lines = lines[3 : 3 + m]
    sample_lines = lines[3 + m : 3 + 2 * m]
    signature = np.array(
        [[_VAL_FOR[ch] for ch in row] for row in matrix_lines], dtype=np.int8
    )
    if signature.size == 0:
        signature = signature.reshape(m, 0)
    received = np.array(
        [complex(float(a), float(b)) for a, b in (ln.split() for ln in sample_lines)]
    )
    return Observation(
        receiver_id=int(fields["receiver"]),
        block_map=block_map,
        visible_rows=visible,
        signature_matrix=signature,
        received=received,
        gamma_s=float(fields["gamma_s"]),
        noise_power=float(fields["noise_power"]),
        bits_per_coord=int(fields["bits"]),
        frame_length=int(fields["frame"]),
        duty_cycle=float(fields["duty"]),
    )
