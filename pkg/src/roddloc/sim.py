"""The iterative two-frame localization protocol.

Each iteration broadcasts two frames: frame 1 carries every transmitter's
quantized x coordinate, frame 2 its y coordinate.  Anchors always transmit
their true quantized position; a client joins the transmit set once it has
produced a position estimate of its own and keeps transmitting from then
on.  Every client decodes both frames, converts each neighbor heard in both
— with frame-consistent link amplitudes — into a range constraint at the
neighbor's reported position, and, given at least three constraints, adopts
the solution of the convex multilateration.  All state updates commit at
the end of the iteration, mirroring frame-synchronized hardware.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import observe
from .codec import CodebookSet, dequantize, quantize
from .decoder import decode_bp
from .locator import RangeConstraint, estimate_distance, solve_location
from .netmodel import Network, NetworkConfig, generate_network

__all__ = [
    "SimConfig",
    "NodeState",
    "IterationRecord",
    "SimResult",
    "average_error",
    "count_within",
    "run_iteration",
    "run_simulation",
    "sim_config_to_dict",
    "sim_config_from_dict",
]


@dataclass(frozen=True)
class SimConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    bits_per_coord: int = 8
    frame_length: int = 600
    duty_cycle: float = 0.5
    bp_iterations: int = 10
    stage_one_iterations: int = 7
    total_iterations: int = 20
    snr_db: float = 30.0
    noise_mode: str = "analytic"
    heard_threshold: float = 0.5
    run_seed: int = 0
    codebook_salt: int = 0
    force_underdetermined_solve: bool = False

    def validate(self) -> None:
        self.network.validate()
        if self.bits_per_coord < 1:
            raise ValueError("bits_per_coord must be >= 1")
        if self.frame_length < 1:
            raise ValueError("frame_length must be >= 1")
        if not 0 < self.duty_cycle < 1:
            raise ValueError("duty_cycle must lie strictly between 0 and 1")
        if self.bp_iterations < 1:
            raise ValueError("bp_iterations must be >= 1")
        if self.stage_one_iterations < 0:
            raise ValueError("stage_one_iterations must be >= 0")
        if self.total_iterations < self.stage_one_iterations:
            raise ValueError("total_iterations must be >= stage_one_iterations")
        if self.noise_mode not in ("analytic", "empirical"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if self.heard_threshold < 0:
            raise ValueError("heard_threshold must be >= 0")
        if self.network.anchor_layout.anchor_count < 3:
            raise ValueError("localization needs at least 3 anchors")

    @property
    def nominal_snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


@dataclass
class NodeState:
    node_id: int
    role: str  # "anchor" | "client"
    estimate: np.ndarray  # (2,) current position estimate
    heard_count_last: int = 0
    has_transmitted: bool = False
    has_solved: bool = False


@dataclass(eq=False)
class IterationRecord:
    iteration: int
    transmitter_count: int
    average_error: float
    count_within_1m: int
    node_ids: np.ndarray
    estimates: np.ndarray  # (n, 2)
    errors: np.ndarray  # (n,)
    symbols_elapsed: int


@dataclass(eq=False)
class SimResult:
    config: SimConfig
    network: Network
    records: list
    states: list

    @property
    def final_average_error(self) -> float:
        return self.records[-1].average_error


def average_error(estimates: np.ndarray, truths: np.ndarray) -> float:
    """Mean Euclidean estimation error over the given (client) nodes."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    truths = np.atleast_2d(np.asarray(truths, dtype=float))
    if estimates.shape[0] == 0:
        raise ValueError("average_error needs at least one node")
    return float(np.mean(np.linalg.norm(estimates - truths, axis=1)))


def count_within(estimates: np.ndarray, truths: np.ndarray, radius: float = 1.0) -> int:
    """Number of nodes whose estimation error is at most ``radius`` meters."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    truths = np.atleast_2d(np.asarray(truths, dtype=float))
    return int(np.sum(np.linalg.norm(estimates - truths, axis=1) <= radius))


def _transmit_ids(states: list) -> list:
    """Who is on air this iteration (sorted for determinism).

    Anchors always; a client joins once it has produced a position estimate
    (a node with nothing but its initial placeholder would otherwise
    broadcast that placeholder as if it were a position, and receivers have
    no way to tell — the reported link amplitude is genuine even when the
    reported position is vacuous).  Qualified clients keep transmitting, so
    participation only grows during staging; after the staging horizon the
    solved-gate is the only remaining condition.
    """
    ids = []
    for st in states:
        if st.role == "anchor":
            ids.append(st.node_id)
        elif st.has_transmitted or st.has_solved:
            ids.append(st.node_id)
    return sorted(ids)


def _accept_constraint(amp_x: complex, amp_y: complex) -> tuple[float, bool]:
    """Mean link amplitude and the two-frame consistency verdict.

    Both frames ride the same channel coefficient, so their fitted complex
    amplitudes must agree; a mismatch means at least one frame decoded the
    wrong column (the fit then chases noise) and the pair gives no usable
    range.  The 0.5 relative gate is loose against fit noise on genuine
    links and tight against mismatches, which concentrate near relative
    difference sqrt(2).
    """
    u_mean = 0.5 * (abs(amp_x) + abs(amp_y))
    if u_mean <= 0.0:
        return 0.0, False
    return u_mean, abs(amp_x - amp_y) <= 0.5 * u_mean


def run_iteration(
    network: Network,
    books: CodebookSet,
    states: list,
    iteration_index: int,
    config: SimConfig,
) -> IterationRecord:
    """One protocol iteration (two frames); commits state updates at the end."""
    area = network.config.area_side
    bits = config.bits_per_coord
    alpha = network.config.path_loss_exponent
    theta = network.config.neighbor_threshold
    by_id = {st.node_id: st for st in states}

    transmit_list = _transmit_ids(states)
    transmit_set = frozenset(transmit_list)
    messages_x = {i: quantize(by_id[i].estimate[0], area, bits) for i in transmit_list}
    messages_y = {i: quantize(by_id[i].estimate[1], area, bits) for i in transmit_list}

    new_estimates: dict[int, np.ndarray] = {}
    new_heard: dict[int, int] = {}
    solved_now: set[int] = set()

    for st in states:
        if st.role == "anchor":
            continue
        rx = st.node_id
        if network.neighbor_sets[rx].size == 0:
            new_heard[rx] = 0
            continue
        outputs = []
        for frame, messages in ((1, messages_x), (2, messages_y)):
            obs = observe(
                network,
                books,
                rx,
                transmit_set,
                messages,
                noise_mode=config.noise_mode,
                noise_key=(config.run_seed, iteration_index, frame, rx),
            )
            outputs.append(
                decode_bp(
                    obs,
                    bp_iterations=config.bp_iterations,
                    heard_threshold=config.heard_threshold,
                )
            )
        out_x, out_y = outputs

        constraints = []
        heard_n = 0
        for b, nbr in enumerate(out_x.block_map):
            if not (out_x.heard[b] and out_y.heard[b]):
                continue
            heard_n += 1
            u_mean, consistent = _accept_constraint(
                out_x.refined_amplitude[b], out_y.refined_amplitude[b]
            )
            if not consistent:
                continue
            pos = (
                dequantize(out_x.message_index[b], area, bits),
                dequantize(out_y.message_index[b], area, bits),
            )
            gain = abs(complex(network.fading[rx, nbr])) ** 2
            rng_m = estimate_distance(u_mean, gain, alpha, theta)
            constraints.append(
                RangeConstraint(center=pos, radius=rng_m, source=network.role(int(nbr)))
            )

        new_heard[rx] = heard_n
        enough = len(constraints) >= 3 or (
            config.force_underdetermined_solve and len(constraints) >= 1
        )
        if enough:
            init = st.estimate if st.has_solved else None
            sol = solve_location(constraints, init=init)
            new_estimates[rx] = sol.position
            solved_now.add(rx)

    # barrier: commit all updates together
    for st in states:
        if st.role == "anchor":
            continue
        rx = st.node_id
        st.heard_count_last = new_heard.get(rx, 0)
        if rx in new_estimates:
            st.estimate = new_estimates[rx]
        if rx in solved_now:
            st.has_solved = True
        if rx in transmit_set:
            st.has_transmitted = True

    node_ids = np.array([st.node_id for st in states], dtype=int)
    estimates = np.array([st.estimate for st in states], dtype=float)
    errors = np.linalg.norm(estimates - network.positions[node_ids], axis=1)
    client_mask = np.array([st.role == "client" for st in states], dtype=bool)
    return IterationRecord(
        iteration=iteration_index,
        transmitter_count=len(transmit_list),
        average_error=average_error(
            estimates[client_mask], network.positions[node_ids[client_mask]]
        ),
        count_within_1m=count_within(
            estimates[client_mask], network.positions[node_ids[client_mask]]
        ),
        node_ids=node_ids,
        estimates=estimates,
        errors=errors,
        symbols_elapsed=2 * config.frame_length * iteration_index,
    )


def run_simulation(config: SimConfig, threads: int = 1) -> SimResult:
    """Run the full protocol; records are a pure function of the config.

    ``threads`` is accepted for interface compatibility and validated, but
    execution is sequential; results never depend on it.
    """
    config.validate()
    if threads < 1:
        raise ValueError("threads must be >= 1")
    net_cfg = replace(config.network, nominal_snr=config.nominal_snr_linear)
    network = generate_network(net_cfg)
    books = CodebookSet(
        bits_per_coord=config.bits_per_coord,
        frame_length=config.frame_length,
        duty_cycle=config.duty_cycle,
        salt=config.codebook_salt,
    )
    states = []
    for i in range(network.node_count):
        if network.anchor_mask[i]:
            states.append(
                NodeState(i, "anchor", network.positions[i].copy(), has_transmitted=True)
            )
        else:
            states.append(NodeState(i, "client", np.zeros(2)))

    records: list[IterationRecord] = []
    prev_tx = 0
    for it in range(1, config.total_iterations + 1):
        rec = run_iteration(network, books, states, it, config)
        # participation can only grow (anchors persist, qualified clients
        # keep transmitting)
        assert rec.transmitter_count >= prev_tx, "participation shrank"
        prev_tx = rec.transmitter_count
        records.append(rec)
    return SimResult(config=config, network=network, records=records, states=states)


# ---------------------------------------------------------------------------
# dict round trip (scenario files)


def sim_config_to_dict(config: SimConfig) -> dict:
    net = config.network
    layout = net.anchor_layout
    layout_doc: dict = {"kind": layout.kind}
    if layout.kind == "lattice":
        layout_doc.update(rows=layout.rows, cols=layout.cols)
    else:
        layout_doc.update(count=layout.count)
    return {
        "network": {
            "area_side": net.area_side,
            "node_count": net.node_count,
            "anchor_layout": layout_doc,
            "path_loss_exponent": net.path_loss_exponent,
            "neighbor_threshold": net.neighbor_threshold,
            "geometry_seed": net.geometry_seed,
        },
        "bits_per_coord": config.bits_per_coord,
        "frame_length": config.frame_length,
        "duty_cycle": config.duty_cycle,
        "bp_iterations": config.bp_iterations,
        "stage_one_iterations": config.stage_one_iterations,
        "total_iterations": config.total_iterations,
        "snr_db": config.snr_db,
        "noise_mode": config.noise_mode,
        "heard_threshold": config.heard_threshold,
        "run_seed": config.run_seed,
        "codebook_salt": config.codebook_salt,
        "force_underdetermined_solve": config.force_underdetermined_solve,
    }


def sim_config_from_dict(doc: dict) -> SimConfig:
    from .netmodel import network_config_from_dict

    defaults = SimConfig()
    config = SimConfig(
        network=network_config_from_dict(doc["network"]),
        bits_per_coord=int(doc.get("bits_per_coord", defaults.bits_per_coord)),
        frame_length=int(doc.get("frame_length", defaults.frame_length)),
        duty_cycle=float(doc.get("duty_cycle", defaults.duty_cycle)),
        bp_iterations=int(doc.get("bp_iterations", defaults.bp_iterations)),
        stage_one_iterations=int(
            doc.get("stage_one_iterations", defaults.stage_one_iterations)
        ),
        total_iterations=int(doc.get("total_iterations", defaults.total_iterations)),
        snr_db=float(doc.get("snr_db", defaults.snr_db)),
        noise_mode=str(doc.get("noise_mode", defaults.noise_mode)),
        heard_threshold=float(doc.get("heard_threshold", defaults.heard_threshold)),
        run_seed=int(doc.get("run_seed", defaults.run_seed)),
        codebook_salt=int(doc.get("codebook_salt", defaults.codebook_salt)),
        force_underdetermined_solve=bool(
            doc.get("force_underdetermined_solve", defaults.force_underdetermined_solve)
        ),
    )
    config.validate()
    return config
