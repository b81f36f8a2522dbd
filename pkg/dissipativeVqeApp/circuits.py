"""Gate-level preparation circuits.

Data qubit l is link l; the ancilla of plaquette n is qubit N + n and writes
classical slot n. Every layer is laid out on a fixed template of timesteps:
the dissipative layer takes 9 slots and every unitary layer 13 slots.
"""
import logging

import numpy as np

from .exceptions import CircuitError, ParameterError
from .models import AnsatzKind, AnsatzSpec, Circuit, Gate, GateKind

logger = logging.getLogger(__name__)

DISSIPATIVE_SLOTS = 9
UNITARY_SLOTS = 13
SERIAL_WINDOW = 7
BALANCED_WINDOW = 5


def theta_of_beta(beta):
    """Ancilla rotation angle realising exp(beta P) after a 0 outcome."""
    return float(2 * np.arctan(np.tanh(beta)))


def ancilla_qubit(geom, n):
    return geom.num_links + n


def correction_mask(geom, outcomes):
    """Data-qubit X mask that undoes the sign of every plaquette that read 1."""
    outcomes = np.asarray(outcomes, dtype=int)
    if outcomes.shape != (geom.num_plaquettes,):
        raise ParameterError(f"expected {geom.num_plaquettes} ancilla outcomes, got {outcomes.shape}")
    mask = np.zeros(geom.num_links, dtype=bool)
    for n in np.flatnonzero(outcomes & 1):
        mask[list(geom.dual_paths[n])] ^= True
    return mask


def correction_conditions(geom):
    """For each link, the classical slots whose XOR decides its correction flip."""
    conditions = {}
    for n, path in enumerate(geom.dual_paths):
        for link in path:
            conditions.setdefault(link, []).append(n)
    return {link: tuple(sorted(slots)) for link, slots in conditions.items()}


# Plaquette exponentials
# --------------------------
def _cnot(control, target):
    return Gate(GateKind.CNOT, (control, target))


def plaquette_exponential_block(links, alpha, balanced=False):
    """Moments of exp(i alpha Z...Z) on 3 or 4 link qubits.

    The parity of the links is collected on the last link (the ladder head),
    rotated by RZ(-2 alpha) and uncomputed. The balanced form pairs the first
    CNOTs of a 4-link ladder so the block is two moments shorter.
    """
    links = tuple(links)
    if len(links) not in (3, 4):
        raise ParameterError(f"plaquette blocks act on 3 or 4 links, got {len(links)}")
    head = links[-1]
    if balanced and len(links) == 4:
        a, b, c, e = links
        compute = [(_cnot(a, b), _cnot(c, e)), (_cnot(b, e),)]
    else:
        compute = [(_cnot(links[i], links[i + 1]),) for i in range(len(links) - 1)]
    rotation = (Gate(GateKind.RZ, (head,), angle=float(-2 * alpha)),)
    return compute + [rotation] + list(reversed(compute))


def _checkerboard(geom):
    first = [p for p in geom.plaquettes if (p.column + p.row) % 2 == 0]
    second = [p for p in geom.plaquettes if (p.column + p.row) % 2 == 1]
    return first, second


# Layer templates
# --------------------------
def _electric_wall(geom, alpha):
    return [Gate(GateKind.RX, (q,), angle=float(-2 * alpha)) for q in range(geom.num_links)]


def _dissipative_steps(geom, theta):
    ancillas = [ancilla_qubit(geom, n) for n in range(geom.num_plaquettes)]
    steps = [
        [Gate(GateKind.H, (q,)) for q in range(geom.num_links)]
        + [Gate(GateKind.RY, (a,), angle=theta) for a in ancillas],
        [Gate(GateKind.H, (a,)) for a in ancillas],
    ]
    # top link first, then clockwise: a link holds one role per plaquette
    for slot in range(4):
        steps.append([
            _cnot(p.slots[slot], ancillas[p.id]) for p in geom.plaquettes if p.slots[slot] is not None
        ])
    steps.append([Gate(GateKind.MEASURE_Z, (a,), slot=n) for n, a in enumerate(ancillas)])
    steps.append([
        Gate(GateKind.COND_X, (link,), condition=slots)
        for link, slots in sorted(correction_conditions(geom).items())
    ])
    return steps


def _magnetic_steps(geom, alpha):
    steps = [[] for _ in range(SERIAL_WINDOW + BALANCED_WINDOW)]
    first, second = _checkerboard(geom)
    for plaquette in first:
        for offset, moment in enumerate(plaquette_exponential_block(plaquette.links, alpha)):
            steps[offset].extend(moment)
    for plaquette in second:
        block = plaquette_exponential_block(plaquette.links, alpha, balanced=True)
        for offset, moment in enumerate(block):
            steps[SERIAL_WINDOW + offset].extend(moment)
    return steps


def build_circuit(geom, spec, params):
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.num_params,):
        raise ParameterError(f"{spec} takes {spec.num_params} parameters, got shape {params.shape}")

    steps = []
    if spec.kind is AnsatzKind.DVA:
        if params[0] < 0:
            raise ParameterError(f"beta must be >= 0, got {params[0]}")
        steps += _dissipative_steps(geom, theta_of_beta(params[0]))
        steps.append(_electric_wall(geom, params[1]))
        for j in range(1, spec.layers):
            steps += _magnetic_steps(geom, params[2 * j])
            steps.append(_electric_wall(geom, params[2 * j + 1]))
    elif spec.kind is AnsatzKind.HVA_E:
        steps.append([Gate(GateKind.H, (q,)) for q in range(geom.num_links)])
        for j in range(spec.layers):
            steps += _magnetic_steps(geom, params[2 * j])
            steps.append(_electric_wall(geom, params[2 * j + 1]))
    else:
        # Theta = pi/2 turns the ancilla protocol into a plaquette measurement
        steps += _dissipative_steps(geom, np.pi / 2)
        for j in range(spec.layers):
            steps.append(_electric_wall(geom, params[2 * j]))
            steps += _magnetic_steps(geom, params[2 * j + 1])

    uses_ancillas = spec.kind is not AnsatzKind.HVA_E
    circuit = Circuit(
        timesteps=tuple(tuple(step) for step in steps),
        num_qubits=geom.num_links + (geom.num_plaquettes if uses_ancillas else 0),
        num_clbits=geom.num_plaquettes if uses_ancillas else 0,
        metadata={"d": geom.d, "layers": spec.layers, "kind": spec.kind.value,
                  "unitary_layers": spec.unitary_layers},
    )
    validate(circuit)
    logger.debug(f"Built {spec} circuit for d={geom.d}: depth {circuit.depth}, {circuit.cnot_count} CNOTs")
    return circuit


def build_dva_circuit(geom, params, layers):
    return build_circuit(geom, AnsatzSpec(AnsatzKind.DVA, layers), params)


# Metrics and checks
# --------------------------
def expected_depth(unitary_layers):
    return UNITARY_SLOTS * unitary_layers + DISSIPATIVE_SLOTS


def expected_cnot_count(d, unitary_layers):
    return (d - 1) * d * (4 + 6 * unitary_layers) - (d - 1) * (2 + 4 * unitary_layers)


def non_clifford_count(circuit, atol=1e-12):
    """Rotations whose angle is not a multiple of pi/2."""
    count = 0
    for gate in circuit.gates:
        if gate.kind in (GateKind.RX, GateKind.RY, GateKind.RZ):
            quarter_turns = gate.angle / (np.pi / 2)
            if abs(quarter_turns - round(quarter_turns)) > atol:
                count += 1
    return count


def validate(circuit):
    written = set()
    for t, step in enumerate(circuit.timesteps):
        seen = set()
        for gate in step:
            for q in gate.qubits:
                if not 0 <= q < circuit.num_qubits:
                    raise CircuitError(f"timestep {t}: qubit {q} out of range")
                if q in seen:
                    raise CircuitError(f"timestep {t}: qubit {q} used twice")
                seen.add(q)
            if gate.angle is not None and not np.isfinite(gate.angle):
                raise CircuitError(f"timestep {t}: non-finite angle in {gate}")
            if gate.kind is GateKind.COND_X and not set(gate.condition) <= written:
                raise CircuitError(f"timestep {t}: {gate} reads an unwritten classical slot")
        for gate in step:
            if gate.kind is GateKind.MEASURE_Z:
                if gate.slot in written:
                    raise CircuitError(f"timestep {t}: classical slot {gate.slot} written twice")
                written.add(gate.slot)
    return True
