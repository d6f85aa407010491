"""Random network geometry, fading marks, neighbor sets, and link statistics.

Node positions are i.i.d. uniform on a square (a Poisson field conditioned on
its count); every unordered pair carries a static circularly symmetric complex
Gaussian fading coefficient, and two nodes are neighbors when the channel
power gain ``|h|^2 * d**-alpha`` clears the threshold ``theta``.  The closed
forms in this module (mean neighbor count, neighbor amplitude density,
interference-plus-noise power) are infinite-plane limits; the Monte Carlo
samplers draw boundary-free disc geometries around a probe node so those
formulas can be validated by simulation without edge bias.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AnchorLayout",
    "NetworkConfig",
    "Network",
    "generate_network",
    "mean_neighbor_count",
    "interference_variance",
    "channel_coefficient",
    "neighbor_amplitude_pdf",
    "neighbor_amplitude_cdf",
    "sample_interior_degrees",
    "sample_interference_power",
    "interference_disc_radius",
    "network_to_json",
    "network_from_json",
]


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class AnchorLayout:
    """Where the anchor nodes sit: a regular lattice or a random subset."""

    kind: str  # "lattice" | "random"
    rows: int = 0
    cols: int = 0
    count: int = 0

    @staticmethod
    def lattice(rows: int, cols: int) -> "AnchorLayout":
        return AnchorLayout("lattice", rows=rows, cols=cols)

    @staticmethod
    def random(count: int) -> "AnchorLayout":
        return AnchorLayout("random", count=count)

    @property
    def anchor_count(self) -> int:
        if self.kind == "lattice":
            return self.rows * self.cols
        return self.count

    def validate(self) -> None:
        if self.kind not in ("lattice", "random"):
            raise ValueError(f"unknown anchor layout kind {self.kind!r}")
        if self.kind == "lattice" and (self.rows < 1 or self.cols < 1):
            raise ValueError("lattice layout needs rows >= 1 and cols >= 1")
        if self.kind == "random" and self.count < 0:
            raise ValueError("random layout needs count >= 0")


@dataclass(frozen=True)
class NetworkConfig:
    area_side: float = 50.0
    node_count: int = 100
    anchor_layout: AnchorLayout = field(
        default_factory=lambda: AnchorLayout.lattice(4, 4)
    )
    path_loss_exponent: float = 3.0
    neighbor_threshold: float = 1e-3
    nominal_snr: float = 1000.0  # linear transmit SNR shared by all nodes
    geometry_seed: int = 0

    @property
    def intensity(self) -> float:
        """Node density in nodes per square meter."""
        return self.node_count / self.area_side**2

    def validate(self) -> None:
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        if self.path_loss_exponent <= 2:
            # the far-field interference integral diverges at alpha <= 2
            raise ValueError("path_loss_exponent must exceed 2")
        if self.neighbor_threshold <= 0:
            raise ValueError("neighbor_threshold must be positive")
        if self.nominal_snr < 0:
            raise ValueError("nominal_snr must be non-negative")
        self.anchor_layout.validate()
        if self.anchor_layout.anchor_count > self.node_count:
            raise ValueError("anchor layout larger than node count")


@dataclass(eq=False)
class Network:
    """An immutable sampled network: geometry, roles, fading, neighbor sets.

    ``fading`` is the full symmetric matrix of pairwise coefficients with a
    zero diagonal; ``neighbor_sets[i]`` is a sorted integer array of the ids
    whose links to ``i`` clear the threshold test.
    """

    config: NetworkConfig
    positions: np.ndarray  # (n, 2) float64
    anchor_mask: np.ndarray  # (n,) bool
    fading: np.ndarray  # (n, n) complex128, hermitian-symmetric by value
    neighbor_sets: list[np.ndarray]

    @property
    def node_count(self) -> int:
        return self.positions.shape[0]

    @property
    def anchor_ids(self) -> np.ndarray:
        return np.flatnonzero(self.anchor_mask)

    @property
    def client_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.anchor_mask)

    def role(self, i: int) -> str:
        return "anchor" if self.anchor_mask[i] else "client"

    def distance(self, i: int, j: int) -> float:
        return float(np.hypot(*(self.positions[i] - self.positions[j])))


def _lattice_positions(rows: int, cols: int, area_side: float) -> np.ndarray:
    """Centers of an rows x cols grid of equal cells over the square."""
    ys = (np.arange(rows) + 0.5) * (area_side / rows)
    xs = (np.arange(cols) + 0.5) * (area_side / cols)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def compute_neighbor_sets(
    positions: np.ndarray, fading: np.ndarray, theta: float, alpha: float
) -> list[np.ndarray]:
    """Threshold test |h|^2 * d**-alpha >= theta for every pair.

    The test is evaluated once on the full gain matrix; symmetry of the
    result is exact because both the distance and the fading entries are
    shared between (i, j) and (j, i).
    """
    n = positions.shape[0]
    diff = positions[:, None, :] - positions[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(dist2, np.inf)
    gain = np.abs(fading) ** 2 * dist2 ** (-alpha / 2.0)
    adjacency = gain >= theta
    return [np.flatnonzero(adjacency[i]) for i in range(n)]


def generate_network(config: NetworkConfig) -> Network:
    """Sample node positions, anchor placement, fading marks, neighbor sets.

    Deterministic given ``config.geometry_seed``.  Anchors occupy the first
    ids; under a lattice layout their positions are overridden to the cell
    centers of the grid, under a random layout they keep their uniform draw.
    """
    config.validate()
    n = config.node_count
    a = config.area_side
    rng = np.random.default_rng(np.random.SeedSequence([1, int(config.geometry_seed)]))

    positions = rng.uniform(0.0, a, size=(n, 2))
    layout = config.anchor_layout
    n_anchor = layout.anchor_count
    anchor_mask = np.zeros(n, dtype=bool)
    anchor_mask[:n_anchor] = True
    if layout.kind == "lattice":
        positions[:n_anchor] = _lattice_positions(layout.rows, layout.cols, a)

    # Static unit-variance complex Gaussian fading per unordered pair.
    re = rng.standard_normal((n, n))
    im = rng.standard_normal((n, n))
    upper = np.triu(re + 1j * im, k=1) / math.sqrt(2.0)
    fading = upper + upper.T

    neighbor_sets = compute_neighbor_sets(
        positions, fading, config.neighbor_threshold, config.path_loss_exponent
    )
    return Network(config, positions, anchor_mask, fading, neighbor_sets)


# ---------------------------------------------------------------------------
# closed-form link statistics


def mean_neighbor_count(intensity: float, theta: float, alpha: float) -> float:
    """Expected number of neighbors of a typical node on the infinite plane.

    Integrating the threshold-pass probability exp(-theta * r**alpha) over
    the plane gives (2/alpha) * pi * intensity * theta**(-2/alpha) * Gamma(2/alpha).
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if intensity < 0:
        raise ValueError("intensity must be non-negative")
    return (
        (2.0 / alpha) * math.pi * intensity * theta ** (-2.0 / alpha) * math.gamma(2.0 / alpha)
    )


def interference_variance(
    intensity: float, duty_cycle: float, snr: float, theta: float, alpha: float
) -> float:
    """Noise-plus-interference power seen in one slot, normalized to unit noise.

    Aggregates the power of all sub-threshold (non-neighbor) transmitters,
    each active with probability ``duty_cycle``, plus unit thermal noise:

        sigma^2 = (4 / (alpha*(alpha-2))) * pi * intensity * duty_cycle * snr
                  * theta**(1 - 2/alpha) * Gamma(2/alpha) + 1

    The radial integral converges only for alpha > 2.
    """
    if alpha <= 2:
        raise ValueError("interference integral diverges for alpha <= 2")
    if not 0 < duty_cycle < 1:
        raise ValueError("duty_cycle must lie strictly between 0 and 1")
    if theta <= 0:
        raise ValueError("theta must be positive")
    if intensity < 0 or snr < 0:
        raise ValueError("intensity and snr must be non-negative")
    return (
        (4.0 / (alpha * (alpha - 2.0)))
        * math.pi
        * intensity
        * duty_cycle
        * snr
        * theta ** (1.0 - 2.0 / alpha)
        * math.gamma(2.0 / alpha)
        + 1.0
    )


def channel_coefficient(network: Network, i: int, j: int) -> complex:
    """Complex link amplitude h_ij * d_ij**(-alpha/2)."""
    if i == j:
        raise ValueError("channel coefficient requires two distinct nodes")
    d = network.distance(i, j)
    if d == 0.0:
        raise ValueError(f"nodes {i} and {j} are coincident; geometry degenerate")
    return complex(network.fading[i, j]) * d ** (-network.config.path_loss_exponent / 2.0)


def neighbor_amplitude_pdf(u, theta: float, alpha: float):
    """Density of |U| over a typical neighbor link.

    Supported on [sqrt(theta), inf): (4/alpha) * theta**(2/alpha) * u**(-4/alpha - 1).
    Accepts scalars or arrays; zero below the support edge.
    """
    u_arr = np.asarray(u, dtype=float)
    out = np.zeros_like(u_arr)
    mask = u_arr >= math.sqrt(theta)
    if np.any(mask):
        um = u_arr[mask]
        out[mask] = (4.0 / alpha) * theta ** (2.0 / alpha) * um ** (-4.0 / alpha - 1.0)
    return out if out.ndim else float(out)


def neighbor_amplitude_cdf(u, theta: float, alpha: float):
    """CDF matching :func:`neighbor_amplitude_pdf`: 1 - (theta/u^2)**(2/alpha)."""
    u_arr = np.asarray(u, dtype=float)
    out = np.zeros_like(u_arr)
    mask = u_arr >= math.sqrt(theta)
    if np.any(mask):
        um = u_arr[mask]
        out[mask] = 1.0 - (theta / um**2) ** (2.0 / alpha)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Monte Carlo validation samplers (boundary-free disc around a probe node)


def _degree_disc_radius(theta: float, alpha: float) -> float:
    # Beyond 10 * theta**(-1/alpha) the threshold-pass probability is
    # exp(-theta r^alpha) <= exp(-10**alpha): utterly negligible.
    return 10.0 * theta ** (-1.0 / alpha)


def interference_disc_radius(theta: float, alpha: float, bias: float = 0.01) -> float:
    """Disc radius large enough that truncating the interference integral
    discards at most ``bias`` of its infinite-plane value.

    The tail beyond R scales as R**(2-alpha); solving for the radius multiple
    k (in units of theta**(-1/alpha)) gives k = [(alpha/2) / (bias * Gamma(2/alpha))]
    ** (1/(alpha-2)).  For alpha=3 and 1% bias this is ~110.8 units.
    """
    k = ((alpha / 2.0) / (bias * math.gamma(2.0 / alpha))) ** (1.0 / (alpha - 2.0))
    return k * theta ** (-1.0 / alpha)


def sample_interior_degrees(
    intensity: float,
    theta: float,
    alpha: float,
    samples: int,
    seed: int = 0,
    collect_amplitudes: bool = False,
):
    """Monte Carlo neighbor counts of a probe node at the center of a disc.

    Each sample draws a fresh Poisson field on a disc big enough that the
    infinite-plane degree formula applies, plus i.i.d. exponential power
    gains.  Returns the per-sample degree array; with
    ``collect_amplitudes=True`` also returns the pooled neighbor amplitudes
    |U| = sqrt(g) * r**(-alpha/2) for distribution tests.
    """
    rng = np.random.default_rng(np.random.SeedSequence([2, int(seed)]))
    radius = _degree_disc_radius(theta, alpha)
    lam_area = intensity * math.pi * radius**2
    counts = rng.poisson(lam_area, size=samples)
    total = int(counts.sum())
    # radial CDF on a disc is (r/R)^2 -> r = R * sqrt(uniform)
    r = radius * np.sqrt(rng.random(total))
    g = rng.exponential(1.0, size=total)
    is_neighbor = g >= theta * r**alpha
    sample_idx = np.repeat(np.arange(samples), counts)
    degrees = np.bincount(sample_idx[is_neighbor], minlength=samples)
    if not collect_amplitudes:
        return degrees
    amplitudes = np.sqrt(g[is_neighbor]) * r[is_neighbor] ** (-alpha / 2.0)
    return degrees, amplitudes


def sample_interference_power(
    intensity: float,
    duty_cycle: float,
    snr: float,
    theta: float,
    alpha: float,
    samples: int,
    seed: int = 0,
    chunk: int = 8,
) -> np.ndarray:
    """Per-sample aggregate power of thinned non-neighbor transmitters.

    Each sample draws a fresh Poisson field on a disc sized by
    :func:`interference_disc_radius` (about 1% truncation bias), keeps each
    sub-threshold point independently with probability ``duty_cycle``, and
    accumulates snr * g * r**-alpha over the retained points.  The sample
    mean estimates the interference part of :func:`interference_variance`
    (i.e. sigma^2 - 1).
    """
    if alpha <= 2:
        raise ValueError("interference integral diverges for alpha <= 2")
    rng = np.random.default_rng(np.random.SeedSequence([3, int(seed)]))
    radius = interference_disc_radius(theta, alpha)
    lam_area = intensity * math.pi * radius**2
    powers = np.empty(samples)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        counts = rng.poisson(lam_area, size=m)
        total = int(counts.sum())
        r = radius * np.sqrt(rng.random(total))
        g = rng.exponential(1.0, size=total)
        keep = (g < theta * r**alpha) & (rng.random(total) < duty_cycle)
        contrib = np.where(keep, snr * g * r ** (-alpha), 0.0)
        idx = np.repeat(np.arange(m), counts)
        powers[done : done + m] = np.bincount(idx, weights=contrib, minlength=m)
        done += m
    return powers


# ---------------------------------------------------------------------------
# JSON round trip for scenario replay


def network_to_json(network: Network) -> dict:
    cfg = network.config
    layout = cfg.anchor_layout
    layout_doc: dict = {"kind": layout.kind}
    if layout.kind == "lattice":
        layout_doc.update(rows=layout.rows, cols=layout.cols)
    else:
        layout_doc.update(count=layout.count)
    n = network.node_count
    nodes = [
        {
            "id": i,
            "x": float(network.positions[i, 0]),
            "y": float(network.positions[i, 1]),
            "role": network.role(i),
        }
        for i in range(n)
    ]
    iu, ju = np.triu_indices(n, k=1)
    fading = [
        [int(i), int(j), float(network.fading[i, j].real), float(network.fading[i, j].imag)]
        for i, j in zip(iu.tolist(), ju.tolist())
    ]
    return {
        "config": {
            "area_side": cfg.area_side,
            "node_count": cfg.node_count,
            "anchor_layout": layout_doc,
            "path_loss_exponent": cfg.path_loss_exponent,
            "neighbor_threshold": cfg.neighbor_threshold,
            "nominal_snr": cfg.nominal_snr,
            "geometry_seed": cfg.geometry_seed,
        },
        "nodes": nodes,
        "fading": fading,
    }


def anchor_layout_from_dict(doc: dict) -> AnchorLayout:
    kind = doc.get("kind")
    if kind == "lattice":
        return AnchorLayout.lattice(int(doc["rows"]), int(doc["cols"]))
    if kind == "random":
        return AnchorLayout.random(int(doc["count"]))
    raise ValueError(f"unknown anchor layout kind {kind!r}")


def network_config_from_dict(doc: dict) -> NetworkConfig:
    cfg = NetworkConfig(
        area_side=float(doc["area_side"]),
        node_count=int(doc["node_count"]),
        anchor_layout=anchor_layout_from_dict(doc["anchor_layout"]),
        path_loss_exponent=float(doc.get("path_loss_exponent", 3.0)),
        neighbor_threshold=float(doc.get("neighbor_threshold", 1e-3)),
        nominal_snr=float(doc.get("nominal_snr", 1000.0)),
        geometry_seed=int(doc.get("geometry_seed", 0)),
    )
    cfg.validate()
    return cfg


def network_from_json(doc: dict) -> Network:
    cfg = network_config_from_dict(doc["config"])
    nodes = sorted(doc["nodes"], key=lambda nd: nd["id"])
    n = len(nodes)
    positions = np.array([[nd["x"], nd["y"]] for nd in nodes], dtype=float)
    anchor_mask = np.array([nd["role"] == "anchor" for nd in nodes], dtype=bool)
    fading = np.zeros((n, n), dtype=complex)
    for i, j, re_part, im_part in doc["fading"]:
        h = complex(re_part, im_part)
        fading[i, j] = h
        fading[j, i] = h
    neighbor_sets = compute_neighbor_sets(
        positions, fading, cfg.neighbor_threshold, cfg.path_loss_exponent
    )
    return Network(cfg, positions, anchor_mask, fading, neighbor_sets)


def dump_network(network: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_json(network), fh)


def load_network(path) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        return network_from_json(json.load(fh))
