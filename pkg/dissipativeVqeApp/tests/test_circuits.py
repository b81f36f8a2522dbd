import json
import unittest

import numpy as np
from scipy.linalg import expm

from dissipativeVqeApp import circuits
from dissipativeVqeApp.exceptions import CircuitError, ParameterError
from dissipativeVqeApp.lattice import build_lattice
from dissipativeVqeApp.models import AnsatzKind, AnsatzSpec, Circuit, Gate, GateKind

PARAMS = np.array([0.3, 0.7, 0.4, 1.1])


def dense_unitary(moments, num_qubits):
    """Unitary of a list of CNOT/RZ moments; qubit q is bit q of the basis index."""
    dim = 1 << num_qubits
    indices = np.arange(dim)
    unitary = np.eye(dim, dtype=complex)
    for moment in moments:
        for gate in moment:
            if gate.kind is GateKind.CNOT:
                control, target = gate.qubits
                flipped = np.where((indices >> control) & 1, indices ^ (1 << target), indices)
                unitary = unitary[flipped]
            else:
                bit = (indices >> gate.qubits[0]) & 1
                phases = np.exp(np.where(bit, 0.5j, -0.5j) * gate.angle)
                unitary = phases[:, None] * unitary
    return unitary


def z_string(num_qubits):
    indices = np.arange(1 << num_qubits)
    parity = np.array([bin(i).count("1") % 2 for i in indices])
    return np.diag(1.0 - 2.0 * parity)


class TemplateTests(unittest.TestCase):

    def test_depth_follows_template(self):
        for d in (2, 3, 4):
            for layers in (1, 2, 3):
                circuit = circuits.build_dva_circuit(build_lattice(d), np.full(2 * layers, 0.3), layers)
                self.assertEqual(circuit.depth, circuits.expected_depth(layers - 1))
        self.assertEqual(circuits.expected_depth(1), 22)

    def test_cnot_count(self):
        for d in (2, 3, 4, 5):
            circuit = circuits.build_dva_circuit(build_lattice(d), PARAMS, 2)
            self.assertEqual(circuit.cnot_count, circuits.expected_cnot_count(d, 1), f"d={d}")
        self.assertEqual(circuits.expected_cnot_count(3, 1), 48)
        self.assertEqual(circuits.expected_cnot_count(3, 0), 20)

    def test_metrics_over_sizes_and_depths(self):
        for d in (2, 3, 4, 5):
            geom = build_lattice(d)
            for unitary_layers in range(4):
                layers = unitary_layers + 1
                circuit = circuits.build_dva_circuit(geom, np.full(2 * layers, 0.3), layers)
                label = f"d={d}, l_u={unitary_layers}"
                self.assertEqual(circuit.depth, 13 * unitary_layers + 9, label)
                self.assertEqual(circuit.cnot_count, circuits.expected_cnot_count(d, unitary_layers), label)
        self.assertEqual(circuits.build_dva_circuit(build_lattice(3), [0.3, 0.0], 1).cnot_count, 20)

    def test_register_sizes(self):
        circuit = circuits.build_dva_circuit(build_lattice(3), PARAMS, 2)
        self.assertEqual((circuit.num_qubits, circuit.num_clbits), (19, 6))
        hva = circuits.build_circuit(build_lattice(3), AnsatzSpec(AnsatzKind.HVA_E, 2), PARAMS)
        self.assertEqual((hva.num_qubits, hva.num_clbits), (13, 0))
        self.assertTrue(all(g.kind is GateKind.H for g in hva.timesteps[0]))

    def test_non_clifford_count(self):
        circuit = circuits.build_dva_circuit(build_lattice(3), PARAMS, 2)
        self.assertEqual(circuits.non_clifford_count(circuit), 38)
        clifford = circuits.build_dva_circuit(build_lattice(3), np.array([0.0, np.pi / 4, 0.0, np.pi / 2]), 2)
        self.assertEqual(circuits.non_clifford_count(clifford), 0)

    def test_dissipative_layer_layout(self):
        geom = build_lattice(3)
        circuit = circuits.build_dva_circuit(geom, PARAMS, 1)
        kinds = [{g.kind for g in step} for step in circuit.timesteps]
        self.assertEqual(kinds[1], {GateKind.H})
        self.assertTrue(all(k == {GateKind.CNOT} for k in kinds[2:6]))
        self.assertEqual(kinds[6], {GateKind.MEASURE_Z})
        self.assertEqual(kinds[7], {GateKind.COND_X})
        self.assertEqual(kinds[8], {GateKind.RX})
        angles = {g.angle for g in circuit.timesteps[0] if g.kind is GateKind.RY}
        self.assertEqual(angles, {circuits.theta_of_beta(0.3)})

    def test_hva_b_prepares_with_quarter_turn(self):
        circuit = circuits.build_circuit(build_lattice(2), AnsatzSpec(AnsatzKind.HVA_B, 1), [0.2, 0.5])
        angles = {g.angle for g in circuit.timesteps[0] if g.kind is GateKind.RY}
        self.assertEqual(angles, {np.pi / 2})

    def test_rejects_bad_parameters(self):
        geom = build_lattice(2)
        with self.assertRaises(ParameterError):
            circuits.build_dva_circuit(geom, np.zeros(3), 2)
        with self.assertRaises(ParameterError):
            circuits.build_dva_circuit(geom, np.array([-0.2, 0, 0, 0]), 2)

    def test_serializes_to_json(self):
        payload = circuits.build_dva_circuit(build_lattice(2), PARAMS, 2).to_dict()
        decoded = json.loads(json.dumps(payload))
        self.assertEqual(decoded["depth"], 22)
        self.assertEqual(decoded["metadata"]["kind"], "dva")


class BlockTests(unittest.TestCase):

    def test_block_unitary_matches_exponential(self):
        for alpha in (0.37, -1.2):
            for links in ((0, 1, 2), (0, 1, 2, 3), (2, 0, 3, 1)):
                num_qubits = max(links) + 1
                expected = expm(1j * alpha * z_string(num_qubits))
                for balanced in (False, True):
                    block = circuits.plaquette_exponential_block(links, alpha, balanced=balanced)
                    np.testing.assert_allclose(dense_unitary(block, num_qubits), expected, atol=1e-12,
                                               err_msg=f"links={links}, balanced={balanced}")

    def test_block_lengths(self):
        self.assertEqual(len(circuits.plaquette_exponential_block((0, 1, 2, 3), 0.2)), circuits.SERIAL_WINDOW)
        self.assertEqual(len(circuits.plaquette_exponential_block((0, 1, 2, 3), 0.2, balanced=True)),
                         circuits.BALANCED_WINDOW)
        self.assertEqual(len(circuits.plaquette_exponential_block((0, 1, 2), 0.2, balanced=True)), 5)
        with self.assertRaises(ParameterError):
            circuits.plaquette_exponential_block((0, 1), 0.2)

    def test_block_is_symmetric(self):
        block = circuits.plaquette_exponential_block((4, 5, 6, 7), 0.9, balanced=True)
        self.assertEqual(block[:2], list(reversed(block[-2:])))
        self.assertEqual(block[2][0].angle, -1.8)


class FeedForwardTests(unittest.TestCase):

    def test_correction_anticommutes_only_with_flagged_plaquettes(self):
        geom = build_lattice(3)
        outcomes = np.array([1, 0, 0, 1, 1, 0])
        mask = circuits.correction_mask(geom, outcomes)
        for p in geom.plaquettes:
            self.assertEqual(int(mask[list(p.links)].sum()) % 2, outcomes[p.id])
        with self.assertRaises(ParameterError):
            circuits.correction_mask(geom, [1, 0])

    def test_conditions_follow_dual_paths(self):
        geom = build_lattice(3)
        conditions = circuits.correction_conditions(geom)
        for n, path in enumerate(geom.dual_paths):
            for link in path:
                self.assertIn(n, conditions[link])

    def test_theta_limits(self):
        self.assertEqual(circuits.theta_of_beta(0.0), 0.0)
        self.assertAlmostEqual(circuits.theta_of_beta(50.0), np.pi / 2)


class ValidationTests(unittest.TestCase):

    def test_qubit_used_twice(self):
        circuit = Circuit(timesteps=((Gate(GateKind.H, (0,)), Gate(GateKind.CNOT, (0, 1))),),
                          num_qubits=2, num_clbits=0)
        with self.assertRaises(CircuitError):
            circuits.validate(circuit)

    def test_condition_on_unwritten_slot(self):
        circuit = Circuit(timesteps=((Gate(GateKind.COND_X, (0,), condition=(0,)),),),
                          num_qubits=2, num_clbits=1)
        with self.assertRaises(CircuitError):
            circuits.validate(circuit)

    def test_qubit_out_of_range(self):
        circuit = Circuit(timesteps=((Gate(GateKind.H, (3,)),),), num_qubits=2, num_clbits=0)
        with self.assertRaises(CircuitError):
            circuits.validate(circuit)
