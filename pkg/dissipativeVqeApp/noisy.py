"""Noisy state-vector emulation of the preparation circuits.

Every gate is followed by a uniformly drawn Pauli fault with probability p,
qubits start flipped with probability 2p/3 and every readout bit is flipped
with probability 2p/3. Idle locations are noise-free.
"""
import logging
import time
from dataclasses import dataclass

import humanize
import numpy as np

from z2Project import settings
from z2Project.workers import map_ordered

from .circuits import build_circuit
from .exceptions import EmptyEstimateError, ParameterError, SizeGuardError
from .lattice import build_lattice
from .models import EstimatorResult, GateKind, NoiseModel

logger = logging.getLogger(__name__)

SINGLE_QUBIT_PAULIS = ("X", "Y", "Z")
TWO_QUBIT_PAULIS = (
    "IX", "IY", "IZ",
    "XI", "XX", "XY", "XZ",
    "YI", "YX", "YY", "YZ",
    "ZI", "ZX", "ZY", "ZZ",
)

_SQRT_HALF = 1 / np.sqrt(2)


def _rotation(kind, angle):
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if kind is GateKind.RX:
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind is GateKind.RY:
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT_HALF


@dataclass
class TrajectoryResult:
    state: np.ndarray      # data qubits, computational basis
    clbits: np.ndarray     # recorded (possibly flipped) ancilla bits
    faults: int


class _Register:
    """Qubit q of an n-qubit register is bit q of the flat amplitude index."""

    def __init__(self, num_qubits):
        self.n = num_qubits
        flat = np.zeros(1 << num_qubits, dtype=complex)
        flat[0] = 1.0
        self.psi = flat.reshape([2] * num_qubits)

    def _index(self, q, value):
        index = [slice(None)] * self.n
        index[self.n - 1 - q] = value
        return tuple(index)

    def apply(self, matrix, q):
        i0, i1 = self._index(q, 0), self._index(q, 1)
        a0, a1 = self.psi[i0].copy(), self.psi[i1].copy()
        self.psi[i0] = matrix[0, 0] * a0 + matrix[0, 1] * a1
        self.psi[i1] = matrix[1, 0] * a0 + matrix[1, 1] * a1

    def x(self, q):
        i0, i1 = self._index(q, 0), self._index(q, 1)
        a0 = self.psi[i0].copy()
        self.psi[i0] = self.psi[i1]
        self.psi[i1] = a0

    def z(self, q):
        self.psi[self._index(q, 1)] *= -1

    def y(self, q):
        i0, i1 = self._index(q, 0), self._index(q, 1)
        a0 = self.psi[i0].copy()
        self.psi[i0] = -1j * self.psi[i1]
        self.psi[i1] = 1j * a0

    def pauli(self, label, q):
        {"X": self.x, "Y": self.y, "Z": self.z}[label](q)

    def cnot(self, control, target):
        sub = self.psi[self._index(control, 1)]
        axis = self.n - 1 - target
        if target < control:
            axis -= 1
        i0 = [slice(None)] * (self.n - 1)
        i1 = list(i0)
        i0[axis], i1[axis] = 0, 1
        a0 = sub[tuple(i0)].copy()
        sub[tuple(i0)] = sub[tuple(i1)]
        sub[tuple(i1)] = a0

    def measure(self, q, rng, forced=None):
        i0, i1 = self._index(q, 0), self._index(q, 1)
        p1 = float(np.sum(np.abs(self.psi[i1]) ** 2))
        outcome = int(rng.random() < p1) if forced is None else int(forced)
        probability = p1 if outcome else 1.0 - p1
        if probability < 1e-15:
            raise ParameterError(f"forced outcome {outcome} on qubit {q} has zero probability")
        self.psi[i0 if outcome else i1] = 0.0
        self.psi /= np.sqrt(probability)
        return outcome


def _sample_fault(register, noise, gate, rng):
    if noise.p == 0 or rng.random() >= noise.p:
        return 0
    if gate.kind is GateKind.CNOT:
        label = TWO_QUBIT_PAULIS[rng.integers(len(TWO_QUBIT_PAULIS))]
        for q, single in zip(gate.qubits, label):
            if single != "I":
                register.pauli(single, q)
    else:
        register.pauli(SINGLE_QUBIT_PAULIS[rng.integers(3)], gate.qubits[0])
    return 1


def run_trajectory(circuit, noise, rng, forced_outcomes=None, num_data=None):
    """Execute one noisy realization; returns the final data-qubit state."""
    if circuit.num_qubits > settings.MAX_CIRCUIT_QUBITS:
        raise SizeGuardError(
            f"{circuit.num_qubits} qubits exceed the simulator guard ({settings.MAX_CIRCUIT_QUBITS})"
        )
    num_data = num_data if num_data is not None else circuit.num_qubits - circuit.num_clbits
    register = _Register(circuit.num_qubits)
    clbits = np.zeros(circuit.num_clbits, dtype=np.int64)
    faults = 0

    if noise.p > 0:
        for q in range(circuit.num_qubits):
            if rng.random() < noise.init_flip:
                register.x(q)
                faults += 1

    for step in circuit.timesteps:
        for gate in step:
            kind = gate.kind
            if kind is GateKind.MEASURE_Z:
                forced = None if forced_outcomes is None else forced_outcomes[gate.slot]
                outcome = register.measure(gate.qubits[0], rng, forced)
                if noise.p > 0 and rng.random() < noise.measurement_flip:
                    outcome ^= 1
                    faults += 1
                clbits[gate.slot] = outcome
                continue
            if kind is GateKind.COND_X:
                if not np.bitwise_xor.reduce(clbits[list(gate.condition)]):
                    continue
                register.x(gate.qubits[0])
            elif kind is GateKind.CNOT:
                register.cnot(*gate.qubits)
            elif kind is GateKind.H:
                register.apply(HADAMARD, gate.qubits[0])
            else:
                register.apply(_rotation(kind, gate.angle), gate.qubits[0])
            faults += _sample_fault(register, noise, gate, rng)

    rows = register.psi.reshape(-1, 1 << num_data)
    row = int(np.argmax(np.sum(np.abs(rows) ** 2, axis=1)))
    state = rows[row] / np.linalg.norm(rows[row])
    return TrajectoryResult(state=state, clbits=clbits, faults=faults)


def hadamard_transform(amplitudes, num_qubits):
    """H on every qubit; maps computational amplitudes to X-basis amplitudes."""
    psi = np.array(amplitudes, dtype=complex).reshape([2] * num_qubits)
    for axis in range(num_qubits):
        a0 = np.take(psi, 0, axis=axis)
        a1 = np.take(psi, 1, axis=axis)
        psi = np.stack([(a0 + a1) * _SQRT_HALF, (a0 - a1) * _SQRT_HALF], axis=axis)
    return psi.reshape(-1)


def fidelity(state, other):
    return float(abs(np.vdot(state, other)) ** 2)


# Estimators
# --------------------------
def _sample_readout(amplitudes, shots, noise, num_bits, rng):
    probabilities = np.abs(amplitudes) ** 2
    probabilities /= probabilities.sum()
    samples = rng.choice(probabilities.size, size=shots, p=probabilities).astype(np.int64)
    if noise.p > 0:
        flips = rng.random((shots, num_bits)) < noise.measurement_flip
        samples ^= flips.astype(np.int64) @ (np.int64(1) << np.arange(num_bits, dtype=np.int64))
    return samples


def _parity(samples, mask):
    return (np.bitwise_count(samples & np.int64(mask)) & 1).astype(np.int64)


def _trajectory_statistics(geom, circuit, config, noise, index):
    rng = np.random.default_rng(config.seed + index)
    trajectory = run_trajectory(circuit, noise, rng, num_data=geom.num_links)

    z_shots = _sample_readout(trajectory.state, config.shots, noise, geom.num_links, rng)
    magnetic = np.zeros(config.shots)
    for mask in geom.plaquette_link_masks:
        magnetic += 1 - 2 * _parity(z_shots, mask)

    x_state = hadamard_transform(trajectory.state, geom.num_links)
    x_shots = _sample_readout(x_state, config.shots, noise, geom.num_links, rng)
    electric = geom.num_links - 2 * np.bitwise_count(x_shots).astype(float)
    keep = np.ones(config.shots, dtype=bool)
    if config.post_select:
        for vertex in geom.vertices:
            keep &= _parity(x_shots, sum(1 << l for l in vertex.links)) == 0
    return (
        magnetic.sum(), np.square(magnetic).sum(),
        electric[keep].sum(), np.square(electric[keep]).sum(), int(keep.sum()),
    )


def combine(magnetic_sums, z_shots, electric_sums, kept, lam):
    """Energy from per-trajectory sums."""
    if np.sum(kept) == 0:
        raise EmptyEstimateError("no X-basis shot survived post-selection")
    magnetic = np.sum(magnetic_sums) / np.sum(z_shots)
    electric = np.sum(electric_sums) / np.sum(kept)
    return -electric - lam * magnetic, electric, magnetic


def _ratio_influence(sums, counts, ratio):
    return (np.asarray(sums) - ratio * np.asarray(counts)) / np.sum(counts)


def clustered_stderr(influence):
    """Standard error from per-trajectory influence terms.

    Shots of one trajectory share a noise realisation, so the trajectory
    is the independent unit.
    """
    influence = np.asarray(influence, dtype=float)
    t = influence.size
    if t < 2:
        return float("nan")
    return float(np.sqrt(t / (t - 1) * np.sum(influence ** 2)))


def estimate_energy(config, max_workers=None):
    geom = build_lattice(config.d)
    circuit = build_circuit(geom, config.spec, config.params)
    noise = NoiseModel(config.p)
    started = time.perf_counter()

    rows = np.array(map_ordered(
        lambda index: _trajectory_statistics(geom, circuit, config, noise, index),
        range(config.trajectories),
        max_workers,
    ))
    magnetic_sums, magnetic_squares, electric_sums, electric_squares, kept = rows.T
    z_shots = np.full(config.trajectories, config.shots, dtype=float)
    total = config.trajectories * config.shots

    energy, electric, magnetic = combine(magnetic_sums, z_shots, electric_sums, kept, config.lam)
    n_kept = kept.sum()
    electric_influence = _ratio_influence(electric_sums, kept, electric)
    magnetic_influence = _ratio_influence(magnetic_sums, z_shots, magnetic)
    if config.trajectories >= 2:
        electric_se = clustered_stderr(electric_influence)
        magnetic_se = clustered_stderr(magnetic_influence)
        energy_se = clustered_stderr(-electric_influence - config.lam * magnetic_influence)
    else:
        # a single trajectory leaves only the shot-to-shot spread
        n_z = z_shots.sum()
        magnetic_se = np.sqrt(max(magnetic_squares.sum() / n_z - magnetic ** 2, 0.0) / n_z)
        electric_se = np.sqrt(max(electric_squares.sum() / n_kept - electric ** 2, 0.0) / n_kept)
        energy_se = np.sqrt(electric_se ** 2 + (config.lam * magnetic_se) ** 2)

    result = EstimatorResult(
        electric=float(electric),
        electric_stderr=float(electric_se),
        magnetic=float(magnetic),
        magnetic_stderr=float(magnetic_se),
        energy=float(energy),
        energy_stderr=float(energy_se),
        kept=int(n_kept),
        total=int(total),
        trajectory_magnetic=magnetic_sums,
        trajectory_z_shots=z_shots,
        trajectory_electric=electric_sums,
        trajectory_kept=kept,
    )
    logger.info(
        f"✅ Noisy estimate {config.spec} d={config.d} p={config.p:g}: "
        f"E={result.energy:.6f}±{result.energy_stderr:.6f}, rejection {result.rejection_rate:.3f} "
        f"({humanize.naturaldelta(time.perf_counter() - started)})"
    )
    return result


# Thresholds
# --------------------------
@dataclass
class Crossing:
    layers: tuple
    p: float
    stderr: float
    censored: bool


def _crossing(ps, upper_gaps, lower_gaps):
    """First p where the deeper ansatz stops beating the shallower one."""
    difference = np.asarray(upper_gaps) - np.asarray(lower_gaps)
    log_p = np.log(ps)
    for i in range(len(ps) - 1):
        if difference[i] > 0 and difference[i + 1] <= 0:
            fraction = difference[i] / (difference[i] - difference[i + 1])
            return float(np.exp(log_p[i] + fraction * (log_p[i + 1] - log_p[i])))
    return None


def _gap(result, lam, reference_energy, rng=None):
    arrays = (result.trajectory_magnetic, result.trajectory_z_shots,
              result.trajectory_electric, result.trajectory_kept)
    if rng is not None:
        pick = rng.integers(len(arrays[0]), size=len(arrays[0]))
        arrays = tuple(a[pick] for a in arrays)
    return combine(*arrays, lam)[0] - reference_energy


def threshold_scan(results, lam, reference_energy, n_bootstrap=200, seed=0):
    """Crossings p_l of the energy-gap curves of adjacent layer counts.

    `results` maps (layers, p) to an EstimatorResult.
    """
    layer_set = sorted({layers for layers, _ in results})
    ps = sorted({p for _, p in results})
    if len(layer_set) < 2 or len(ps) < 4:
        raise ParameterError("threshold scan needs >= 2 layer counts and >= 4 error rates")
    if min(ps) <= 0:
        raise ParameterError("threshold scan interpolates in log p; all error rates must be > 0")

    rng = np.random.default_rng(seed)
    crossings = []
    for shallow, deep in zip(layer_set, layer_set[1:]):
        shallow_gaps = [_gap(results[(shallow, p)], lam, reference_energy) for p in ps]
        deep_gaps = [_gap(results[(deep, p)], lam, reference_energy) for p in ps]
        estimate = _crossing(ps, shallow_gaps, deep_gaps)

        samples = []
        for _ in range(n_bootstrap):
            resampled = _crossing(
                ps,
                [_gap(results[(shallow, p)], lam, reference_energy, rng) for p in ps],
                [_gap(results[(deep, p)], lam, reference_energy, rng) for p in ps],
            )
            if resampled is not None:
                samples.append(resampled)
        stderr = float(np.std(samples)) if len(samples) > 1 else float("nan")
        crossings.append(Crossing((shallow, deep), estimate, stderr, estimate is None))
        if estimate is None:
            logger.warning(f"No crossing between {shallow} and {deep} layers in [{ps[0]:g}, {ps[-1]:g}]")
    return crossings


def optimal_layers(results, lam, reference_energy):
    """For every error rate, the layer count with the smallest energy gap."""
    best = {}
    for (layers, p), result in sorted(results.items()):
        gap = _gap(result, lam, reference_energy)
        if p not in best or gap < best[p][1]:
            best[p] = (layers, gap)
    return {p: layers for p, (layers, _) in best.items()}
