"""Coordinate quantizer and per-node random ternary on-off codebooks.

Every node derives a private codebook of ``2**bits_per_coord`` codewords from
its network interface address: each codeword is ``frame_length`` symbols
drawn i.i.d. from {-1, 0, +1} with P(0) = 1 - duty_cycle and the signs split
evenly.  Broadcasting a quantized coordinate means transmitting the codeword
indexed by that coordinate's cell; the zero symbols double as listening
slots, which is what lets a half-duplex node receive while it transmits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "quantization_step",
    "quantize",
    "dequantize",
    "Codebook",
    "CodebookSet",
    "generate_codebook",
    "build_sparse_vector",
    "dump_codebook",
    "load_codebook",
]

_CODEBOOK_STREAM_TAG = 4  # keeps codebook seeds disjoint from other rng domains


# ---------------------------------------------------------------------------
# scalar quantizer


def quantization_step(area_side: float, bits: int) -> float:
    """Grid pitch of the broadcast coordinate lattice: area_side / 2**bits."""
    return area_side / (1 << bits)


def quantize(x: float, area_side: float, bits: int) -> int:
    """Cell index of coordinate ``x``; out-of-range values clamp to the edge cells."""
    step = quantization_step(area_side, bits)
    idx = int(np.floor(x / step))
    return min(max(idx, 0), (1 << bits) - 1)


def dequantize(index: int, area_side: float, bits: int) -> float:
    """Center of the indexed cell (worst-case reconstruction error = step/2)."""
    return (index + 0.5) * quantization_step(area_side, bits)


# ---------------------------------------------------------------------------
# codebooks


@dataclass(eq=False)
class Codebook:
    """One node's table of ternary on-off codewords (2**bits rows, one per message)."""

    owner_nia: int
    bits_per_coord: int
    frame_length: int
    duty_cycle: float
    salt: int
    words: np.ndarray  # (2**bits, frame_length) int8 in {-1, 0, +1}

    @property
    def word_count(self) -> int:
        return self.words.shape[0]

    def word(self, message: int) -> np.ndarray:
        return self.words[message]

    def off_slots(self, message: int) -> np.ndarray:
        """Slot indices where the given codeword is silent (value 0)."""
        return np.flatnonzero(self.words[message] == 0)


def generate_codebook(
    owner_nia: int,
    bits_per_coord: int,
    frame_length: int,
    duty_cycle: float,
    codebook_salt: int = 0,
) -> Codebook:
    """Deterministically draw a node's codebook from (owner_nia, codebook_salt).

    A single uniform draw per symbol is split as
    [0, 1-q) -> 0, [1-q, 1-q/2) -> +1, [1-q/2, 1) -> -1,
    giving P(0) = 1-q and P(+1) = P(-1) = q/2 exactly.
    """
    if bits_per_coord < 1:
        raise ValueError("bits_per_coord must be >= 1")
    if frame_length < 1:
        raise ValueError("frame_length must be >= 1")
    if not 0 < duty_cycle < 1:
        raise ValueError("duty_cycle must lie strictly between 0 and 1")
    rng = np.random.default_rng(
        np.random.SeedSequence([_CODEBOOK_STREAM_TAG, int(owner_nia), int(codebook_salt)])
    )
    u = rng.random((1 << bits_per_coord, frame_length))
    words = np.zeros(u.shape, dtype=np.int8)
    words[u >= 1.0 - duty_cycle] = 1
    words[u >= 1.0 - duty_cycle / 2.0] = -1
    return Codebook(
        owner_nia=int(owner_nia),
        bits_per_coord=bits_per_coord,
        frame_length=frame_length,
        duty_cycle=duty_cycle,
        salt=int(codebook_salt),
        words=words,
    )


@dataclass
class CodebookSet:
    """Lazy cache of codebooks sharing one (bits, frame, duty cycle, salt) profile."""

    bits_per_coord: int
    frame_length: int
    duty_cycle: float
    salt: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def for_node(self, nia: int) -> Codebook:
        book = self._cache.get(nia)
        if book is None:
            book = generate_codebook(
                nia, self.bits_per_coord, self.frame_length, self.duty_cycle, self.salt
            )
            self._cache[nia] = book
        return book


# ---------------------------------------------------------------------------
# ground-truth sparse vector (for oracles and synthetic decoder instances)


def build_sparse_vector(messages, amplitudes, bits_per_coord: int) -> np.ndarray:
    """Stack K one-hot blocks of size 2**bits, entry ``messages[i]`` of block i
    set to ``amplitudes[i]`` (zero-based message indices)."""
    messages = list(messages)
    amplitudes = list(amplitudes)
    if len(messages) != len(amplitudes):
        raise ValueError("messages and amplitudes must have equal length")
    block = 1 << bits_per_coord
    x = np.zeros(block * len(messages), dtype=complex)
    for i, (w, u) in enumerate(zip(messages, amplitudes)):
        if not 0 <= w < block:
            raise ValueError(f"message index {w} out of range [0, {block})")
        x[i * block + w] = u
    return x


# ---------------------------------------------------------------------------
# portable text dump (cross-implementation fixtures)

_CHAR_FOR = {-1: "-", 0: "0", 1: "+"}
_VAL_FOR = {"-": -1, "0": 0, "+": 1}


def dump_codebook(book: Codebook) -> str:
    header = (
        f"nia={book.owner_nia} bits={book.bits_per_coord} "
        f"frame={book.frame_length} duty={book.duty_cycle!r} salt={book.salt}"
    )
    rows = ["".join(_CHAR_FOR[int(v)] for v in row) for row in book.words]
    return "\n".join([header] + rows) + "\n"


def load_codebook(text: str) -> Codebook:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    fields = dict(item.split("=", 1) for item in lines[0].split())
    words = np.array(
        [[_VAL_FOR[ch] for ch in row] for row in lines[1:]], dtype=np.int8
    )
    book = Codebook(
        owner_nia=int(fields["nia"]),
        bits_per_coord=int(fields["bits"]),
        frame_length=int(fields["frame"]),
        duty_cycle=float(fields["duty"]),
        salt=int(fields["salt"]),
        words=words,
    )
    if words.shape != (1 << book.bits_per_coord, book.frame_length):
        raise ValueError("codebook dump shape does not match its header")
    return book
