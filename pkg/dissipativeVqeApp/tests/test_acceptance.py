import unittest

import numpy as np

from z2Project import settings

from dissipativeVqeApp import noisy, vqe
from dissipativeVqeApp.dual_engine import bulk_average_magnetization, topological_entropy
from dissipativeVqeApp.lattice import build_lattice
from dissipativeVqeApp.models import AnsatzKind, AnsatzSpec, ExperimentConfig, MagnetizationCurve
from dissipativeVqeApp.scaling import finite_size_scaling
from dissipativeVqeApp.spectra import ground_state

DVA1 = AnsatzSpec(AnsatzKind.DVA, 1)
DVA2 = AnsatzSpec(AnsatzKind.DVA, 2)
HVA2 = AnsatzSpec(AnsatzKind.HVA_E, 2)

# dense enough near lambda ~ 3 for the parabolic peak refinement
SCALING_GRID = np.linspace(0.0, 8.0, 161)


def sweep_curve(spec, d, n_seeds=4):
    result = vqe.sweep(build_lattice(d), spec, SCALING_GRID[-1], SCALING_GRID.size, n_seeds, 0.1,
                       master_seed=0, with_ed=False)
    return MagnetizationCurve(spec.kind.value, d, result.lambdas, [r.magnetization for r in result.records])


def optimized_params(geom, spec, lam):
    result = vqe.sweep(geom, spec, lam, 16, 4, 0.1, master_seed=0, with_ed=False)
    return result.records[-1].params


@unittest.skipUnless(settings.RUN_SLOW_TESTS, "set Z2_SLOW_TESTS=True for the end-to-end benchmarks")
class VariationalAccuracyTests(unittest.TestCase):

    def test_two_layers_stay_below_one_percent(self):
        for d in (3, 4, 5):
            result = vqe.sweep(build_lattice(d), DVA2, 16.0, 50, 8, 0.1, master_seed=0)
            self.assertLessEqual(result.max_relative_error, 1e-2, msg=f"d={d}")

    def test_entropy_limits_of_fitted_states(self):
        geom = build_lattice(3)
        result = vqe.sweep(geom, DVA2, 50.0, 1001, 4, 0.1, master_seed=0, with_ed=False)
        confined, deconfined = result.records[1], result.records[-1]
        self.assertAlmostEqual(confined.lam, 0.05)
        self.assertLess(abs(topological_entropy(vqe.prepare(geom, DVA2, confined.params))), 0.05)
        self.assertLess(abs(topological_entropy(vqe.prepare(geom, DVA2, deconfined.params)) + 1.0), 0.05)


@unittest.skipUnless(settings.RUN_SLOW_TESTS, "set Z2_SLOW_TESTS=True for the end-to-end benchmarks")
class CriticalExponentTests(unittest.TestCase):

    def test_exact_curves(self):
        curves = []
        for d in (2, 3, 4, 5):
            geom = build_lattice(d)
            magnetization = [bulk_average_magnetization(ground_state(geom, lam)[1]) for lam in SCALING_GRID]
            curves.append(MagnetizationCurve("ED", d, SCALING_GRID, magnetization))
        fit = finite_size_scaling(curves)
        self.assertAlmostEqual(fit.lambda_c, 3.06, delta=0.15)
        self.assertAlmostEqual(fit.nu, 0.64, delta=0.08)
        self.assertAlmostEqual(fit.beta, 0.36, delta=0.06)

    def test_dissipative_curves(self):
        fit = finite_size_scaling([sweep_curve(DVA2, d) for d in (2, 3, 4, 5)])
        self.assertAlmostEqual(fit.lambda_c, 3.24, delta=0.15)
        self.assertAlmostEqual(fit.nu, 0.59, delta=0.08)
        self.assertAlmostEqual(fit.beta, 0.35, delta=0.06)

    def test_unitary_curves_give_negative_nu(self):
        fit = finite_size_scaling([sweep_curve(HVA2, d) for d in (2, 3, 4, 5)])
        self.assertLess(fit.nu, 0.0)


@unittest.skipUnless(settings.RUN_SLOW_TESTS, "set Z2_SLOW_TESTS=True for the end-to-end benchmarks")
class NoisyBenchmarkTests(unittest.TestCase):
    LAM = 3.0
    PS = (1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3)

    @classmethod
    def setUpClass(cls):
        cls.geom = build_lattice(3)
        cls.params = {spec.layers: optimized_params(cls.geom, spec, cls.LAM) for spec in (DVA1, DVA2)}
        cls.reference_energy, _ = ground_state(cls.geom, cls.LAM)

    def estimate(self, layers, p, trajectories=1000):
        spec = DVA1 if layers == 1 else DVA2
        config = ExperimentConfig(d=3, spec=spec, params=self.params[layers], lam=self.LAM, p=p,
                                  trajectories=trajectories, shots=100, seed=11)
        return noisy.estimate_energy(config)

    def test_noiseless_estimates_match_state_vector(self):
        for layers in (1, 2):
            spec = DVA1 if layers == 1 else DVA2
            result = self.estimate(layers, 0.0)
            exact = vqe.variational_energy(self.geom, spec, self.params[layers], self.LAM)
            self.assertLess(abs(result.energy - exact), 3 * result.energy_stderr, msg=f"layers={layers}")

    def test_rejection_and_layer_crossing(self):
        results = {(layers, p): self.estimate(layers, p) for layers in (1, 2) for p in self.PS}
        for layers in (1, 2):
            rates = [results[(layers, p)].rejection_rate for p in self.PS[2:]]
            self.assertTrue(all(b >= a for a, b in zip(rates, rates[1:])), msg=f"layers={layers}: {rates}")
        for p in self.PS[3:]:
            self.assertGreater(results[(2, p)].rejection_rate, results[(1, p)].rejection_rate)

        (crossing,) = noisy.threshold_scan(results, self.LAM, self.reference_energy, n_bootstrap=50)
        self.assertFalse(crossing.censored)
        self.assertTrue(1e-4 <= crossing.p <= 1e-3, msg=f"crossing at p={crossing.p:g}")
