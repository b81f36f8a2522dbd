import unittest
from unittest import mock

import numpy as np

from dissipativeVqeApp import dual_engine as engine
from dissipativeVqeApp.exceptions import EntropyBudgetError, ParameterError, UndefinedCreutzRatio
from dissipativeVqeApp.lattice import build_lattice, centered_anchor, wilson_rectangle
from dissipativeVqeApp.spectra import SparseDualHamiltonian


def random_state(geom, seed=7):
    rng = np.random.default_rng(seed)
    amplitudes = rng.normal(size=geom.dimension) + 1j * rng.normal(size=geom.dimension)
    return engine.normalized(geom, amplitudes)


class FieldTableTests(unittest.TestCase):

    def test_reference_diagonal_is_link_count(self):
        for d in (2, 3, 4):
            geom = build_lattice(d)
            self.assertEqual(engine.field_table(geom).diagonal()[0], geom.num_links)

    def test_smallest_lattice_diagonal(self):
        # one shared horizontal link, four single-plaquette verticals
        np.testing.assert_array_equal(engine.field_table(build_lattice(2)).diagonal(), [5, -1, -1, -3])

    def test_contributions_sum_to_diagonal(self):
        geom = build_lattice(3)
        table = engine.field_table(geom)
        for b in (0, 1, 5, 22, 63):
            self.assertEqual(table.contributions(b).sum(), table.diagonal()[b])

    def test_link_sign_matches_parity(self):
        table = engine.field_table(build_lattice(3))
        np.testing.assert_array_equal(table.link_sign(4), 1 - 2 * table.link_parity(4))


class KernelTests(unittest.TestCase):

    def setUp(self):
        self.geom = build_lattice(3)
        self.state = random_state(self.geom)

    def test_flip_is_an_involution(self):
        twice = engine.flip_plaquette(engine.flip_plaquette(self.state.amplitudes, 2), 2)
        np.testing.assert_allclose(twice, self.state.amplitudes)

    def test_flip_permutes_bit(self):
        basis = engine.basis_state(self.geom, 0b000101)
        flipped = engine.flip_plaquette(basis.amplitudes, 1)
        self.assertEqual(np.flatnonzero(flipped)[0], 0b000111)

    def test_zero_beta_dissipation_is_identity(self):
        np.testing.assert_allclose(engine.dissipate(self.state.amplitudes, 0.0), self.state.amplitudes)

    def test_dissipation_norm_and_plaquette_expectation(self):
        beta = 0.37
        state, scale = engine.apply_dissipative(engine.init_reference(self.geom), beta, return_norm=True)
        self.assertAlmostEqual(scale, np.cosh(2 * beta) ** (self.geom.num_plaquettes / 2))
        self.assertAlmostEqual(state.norm, 1.0)
        self.assertAlmostEqual(
            engine.magnetic_expectation(state), self.geom.num_plaquettes * np.tanh(2 * beta)
        )

    def test_negative_beta_rejected(self):
        with self.assertRaises(ParameterError):
            engine.apply_dissipative(self.state, -0.1)

    def test_unitary_layers_preserve_norm(self):
        state = engine.apply_magnetic_phase(engine.apply_electric_phase(self.state, 0.8), 1.3)
        self.assertAlmostEqual(state.norm, 1.0)

    def test_magnetic_rotation_is_exponential_of_term(self):
        geom = build_lattice(2)
        state = random_state(geom)
        hamiltonian = SparseDualHamiltonian(geom, -1.0).to_dense() - np.diag(SparseDualHamiltonian(geom, 0.0).diagonal)
        values, vectors = np.linalg.eigh(hamiltonian)
        exact = vectors @ np.diag(np.exp(0.6j * values)) @ vectors.T @ state.amplitudes
        np.testing.assert_allclose(engine.rotate_magnetic(state.amplitudes, 0.6), exact, atol=1e-12)


class ObservableTests(unittest.TestCase):

    def test_reference_energy(self):
        geom = build_lattice(2)
        self.assertEqual(engine.energy(engine.init_reference(geom), 0.0), -5.0)

    def test_uniform_state_energy(self):
        geom = build_lattice(3)
        state = engine.uniform_state(geom)
        self.assertAlmostEqual(engine.electric_expectation(state), 0.0)
        self.assertAlmostEqual(engine.energy(state, 2.0), -2.0 * geom.num_plaquettes)

    def test_energy_matches_hamiltonian(self):
        geom = build_lattice(3)
        state = random_state(geom)
        hamiltonian = SparseDualHamiltonian(geom, 1.7)
        expected = np.vdot(state.amplitudes, hamiltonian.matvec(state.amplitudes)).real
        self.assertAlmostEqual(engine.energy(state, 1.7), expected)

    def test_dual_magnetization_limits(self):
        geom = build_lattice(3)
        self.assertAlmostEqual(engine.bulk_average_magnetization(engine.init_reference(geom)), 1.0)
        self.assertAlmostEqual(engine.bulk_average_magnetization(engine.uniform_state(geom)), 0.0)
        self.assertAlmostEqual(engine.dual_magnetization(engine.basis_state(geom, 1 << 4), 4), -1.0)

    def test_wilson_loops(self):
        geom = build_lattice(4)
        mask = wilson_rectangle(geom, 2, 2, centered_anchor(geom, 2, 2))
        self.assertAlmostEqual(engine.wilson_expectation(engine.uniform_state(geom), mask), 1.0)
        self.assertAlmostEqual(engine.wilson_expectation(engine.init_reference(geom), mask), 0.0)
        self.assertAlmostEqual(engine.wilson_expectation(engine.init_reference(geom), 0), 1.0)

    def test_creutz_ratio(self):
        geom = build_lattice(4)
        self.assertAlmostEqual(engine.creutz_ratio(engine.uniform_state(geom), 2), 0.0)
        with self.assertRaises(UndefinedCreutzRatio) as caught:
            engine.creutz_ratio(engine.init_reference(geom), 1)
        self.assertIn("ll", caught.exception.expectations)

    def test_creutz_ratio_of_dissipated_state(self):
        # product state: every loop is tanh(beta)^area
        geom = build_lattice(4)
        beta = 0.4
        state = engine.apply_dissipative(engine.init_reference(geom), beta)
        t = np.tanh(2 * beta)
        self.assertAlmostEqual(engine.creutz_ratio(state, 2), -np.log(t ** 4 * t / (t ** 2 * t ** 2)))

    def test_infidelity(self):
        geom = build_lattice(3)
        state = random_state(geom)
        self.assertAlmostEqual(engine.infidelity(state, state), 0.0)
        self.assertAlmostEqual(
            engine.infidelity(engine.basis_state(geom, 1), engine.init_reference(geom)), 1.0
        )


class EntropyTests(unittest.TestCase):

    def test_reference_state_is_unentangled(self):
        geom = build_lattice(3)
        state = engine.init_reference(geom)
        self.assertAlmostEqual(engine.renyi2_entropy(state, range(5)), 0.0)
        self.assertAlmostEqual(engine.topological_entropy(state), 0.0)

    def test_uniform_state_single_link_is_maximally_mixed(self):
        geom = build_lattice(3)
        state = engine.uniform_state(geom)
        self.assertAlmostEqual(engine.renyi2_entropy(state, [0]), 1.0)
        self.assertAlmostEqual(engine.von_neumann_entropy(state, [0]), 1.0)

    def test_uniform_state_topological_entropy(self):
        for d in (2, 3, 4):
            state = engine.uniform_state(build_lattice(d))
            self.assertAlmostEqual(engine.topological_entropy(state), -1.0, msg=f"d={d}")

    def test_renyi_bounded_by_von_neumann(self):
        geom = build_lattice(3)
        state = random_state(geom, seed=3)
        region = [0, 1, 2, 5]
        self.assertLessEqual(engine.renyi2_entropy(state, region), engine.von_neumann_entropy(state, region) + 1e-10)

    def test_complementary_regions_agree(self):
        geom = build_lattice(3)
        state = random_state(geom, seed=11)
        region = [1, 3, 4, 8]
        complement = [l for l in range(geom.num_links) if l not in region]
        self.assertAlmostEqual(engine.renyi2_entropy(state, region), engine.renyi2_entropy(state, complement))

    def test_renyi_matches_reduced_density_matrix(self):
        for d, region in ((2, [0, 3]), (2, [1, 2, 4]), (3, [0, 1, 2, 5]), (3, [3, 4, 7, 8, 12])):
            geom = build_lattice(d)
            state = random_state(geom, seed=d)
            full = engine.to_full_xbasis(state)
            n = geom.num_links
            # reshape puts qubit n-1 on axis 0
            tensor = full.reshape((2,) * n)
            axes = [n - 1 - l for l in region]
            rest = [axis for axis in range(n) if axis not in axes]
            block = np.transpose(tensor, axes + rest).reshape(1 << len(region), -1)
            rho = block @ block.conj().T
            expected = -np.log2(np.real(np.trace(rho @ rho)))
            self.assertAlmostEqual(engine.renyi2_entropy(state, region), expected, places=10,
                                   msg=f"d={d} region={region}")

    def test_star_partition_below_five(self):
        for d in (2, 3, 4):
            geom = build_lattice(d)
            a, b, c = engine.centered_partition(geom)
            self.assertEqual(sorted(a + b + c), sorted(geom.central_vertex.links))
            with self.assertRaises(ParameterError):
                engine.centered_partition(geom, wide=True)

    def test_block_partition_covers_the_central_block(self):
        geom = build_lattice(5)
        a, b, c = engine.centered_partition(geom)
        self.assertEqual((len(a), len(b), len(c)), (3, 4, 5))
        links = set(a) | set(b) | set(c)
        self.assertEqual(len(links), 12)
        self.assertTrue(set(geom.central_vertex.links) <= links)
        vertex = geom.central_vertex
        for column, row in ((vertex.column - 1, vertex.row - 1), (vertex.column, vertex.row - 1),
                            (vertex.column - 1, vertex.row), (vertex.column, vertex.row)):
            self.assertTrue(set(geom.plaquette_at(column, row).links) <= links)

    def test_block_partition_limits(self):
        geom = build_lattice(5)
        self.assertAlmostEqual(engine.topological_entropy(engine.uniform_state(geom)), -1.0)
        self.assertAlmostEqual(engine.topological_entropy(engine.init_reference(geom)), 0.0)
        star = engine.centered_partition(geom, wide=False)
        self.assertAlmostEqual(engine.topological_entropy(engine.uniform_state(geom), star), -1.0)

    def test_block_partition_falls_back_over_budget(self):
        geom = build_lattice(5)
        with mock.patch("z2Project.settings.MAX_ENTROPY_GROUPS", 2 ** 4):
            self.assertEqual(engine.centered_partition(geom), engine.centered_partition(geom, wide=False))

    def test_overlapping_partition_rejected(self):
        state = engine.uniform_state(build_lattice(3))
        with self.assertRaises(ParameterError):
            engine.topological_entropy(state, ([0, 1], [1], [2]))

    def test_budget_guard(self):
        state = engine.uniform_state(build_lattice(3))
        with mock.patch("z2Project.settings.MAX_ENTROPY_GROUPS", 1):
            with self.assertRaises(EntropyBudgetError) as caught:
                engine.renyi2_entropy(state, [0, 1, 2])
        self.assertGreaterEqual(caught.exception.rank, 1)


class FullSpaceTests(unittest.TestCase):

    def test_reference_maps_to_all_plus(self):
        geom = build_lattice(2)
        full = engine.to_full_xbasis(engine.init_reference(geom))
        self.assertEqual(np.flatnonzero(full).tolist(), [0])

    def test_full_vector_satisfies_gauss_law(self):
        geom = build_lattice(3)
        full = engine.to_full_xbasis(random_state(geom))
        self.assertAlmostEqual(np.linalg.norm(full), 1.0)
        for config in np.flatnonzero(np.abs(full) > 0):
            for vertex in geom.vertices:
                self.assertEqual(sum((int(config) >> l) & 1 for l in vertex.links) % 2, 0)
