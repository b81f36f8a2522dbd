"""Variational ansatze, exact gradients and the lambda-sweep optimizer."""
import logging
import time

import humanize
import numpy as np
from scipy.optimize import minimize as scipy_minimize

from z2Project import settings
from z2Project.workers import map_ordered

from .dual_engine import (
    DualState,
    apply_magnetic_term,
    bulk_average_magnetization,
    dissipate,
    field_table,
    flip_plaquette,
    infidelity,
    init_reference,
    rotate_magnetic,
    uniform_state,
)
from .exceptions import OptimizerAbort, ParameterError, SizeGuardError
from .models import AnsatzKind, AnsatzSpec, SweepRecord, SweepResult
from .spectra import ground_state

logger = logging.getLogger(__name__)

DISSIPATIVE = "dissipative"
ELECTRIC = "electric"
MAGNETIC = "magnetic"
TWO_PI = 2 * np.pi


def layer_schedule(spec):
    """Operators in application order, each paired with its parameter index."""
    if spec.layers < 1:
        raise ParameterError(f"ansatz needs at least one layer, got {spec.layers}")
    if spec.kind is AnsatzKind.DVA:
        ops = [(DISSIPATIVE, 0), (ELECTRIC, 1)]
        for j in range(1, spec.layers):
            ops += [(MAGNETIC, 2 * j), (ELECTRIC, 2 * j + 1)]
        return ops
    first, second = (MAGNETIC, ELECTRIC) if spec.kind is AnsatzKind.HVA_E else (ELECTRIC, MAGNETIC)
    ops = []
    for j in range(spec.layers):
        ops += [(first, 2 * j), (second, 2 * j + 1)]
    return ops


def free_indices(spec):
    if spec.clamp_angles:
        if spec.kind is not AnsatzKind.DVA:
            raise ParameterError("only the dissipative ansatz has a beta-only variant")
        return np.array([0])
    return np.arange(spec.num_params)


def bounds_for(spec):
    """L-BFGS-B bounds: hard box on beta, angles unbounded and wrapped afterwards."""
    out = []
    for op, _ in layer_schedule(spec):
        out.append(settings.BETA_BOUNDS if op == DISSIPATIVE else (None, None))
    return out


def reference_for(geom, spec):
    return uniform_state(geom) if spec.kind is AnsatzKind.HVA_B else init_reference(geom)


def _check_params(spec, params):
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.num_params,):
        raise ParameterError(f"{spec} takes {spec.num_params} parameters, got shape {params.shape}")
    return params


def wrap_params(spec, params):
    params = np.array(params, dtype=float)
    for op, index in layer_schedule(spec):
        if op != DISSIPATIVE:
            params[index] = np.mod(params[index], TWO_PI)
    return params


# Layer kernels on raw amplitude arrays
# --------------------------
def _normalize(amplitudes):
    return amplitudes / np.sqrt(np.sum(np.abs(amplitudes) ** 2))


def _apply(op, amplitudes, theta, diagonal):
    if op == DISSIPATIVE:
        return _normalize(dissipate(amplitudes, theta))
    if op == ELECTRIC:
        return amplitudes * np.exp(1j * theta * diagonal)
    return rotate_magnetic(amplitudes, theta)


def _hamiltonian_apply(amplitudes, diagonal, lam):
    return -diagonal * amplitudes - lam * apply_magnetic_term(amplitudes)


def _expectation(amplitudes, diagonal, lam):
    """<phi|H|phi> without normalizing phi."""
    return float(np.vdot(amplitudes, _hamiltonian_apply(amplitudes, diagonal, lam)).real)


def prepare(geom, spec, params):
    params = _check_params(spec, params)
    diagonal = field_table(geom).diagonal()
    amplitudes = reference_for(geom, spec).amplitudes
    for op, index in layer_schedule(spec):
        if op == DISSIPATIVE and params[index] < 0:
            raise ParameterError(f"beta must be >= 0, got {params[index]}")
        amplitudes = _apply(op, amplitudes, params[index], diagonal)
    return DualState(geom, amplitudes)


def variational_energy(geom, spec, params, lam):
    state = prepare(geom, spec, params)
    return _expectation(state.amplitudes, field_table(geom).diagonal(), lam)


# Gradients
# --------------------------
def energy_gradient_adjoint(geom, spec, params, lam):
    """Energy and its gradient by reverse-mode accumulation through the layers."""
    params = _check_params(spec, params)
    diagonal = field_table(geom).diagonal()
    schedule = layer_schedule(spec)

    psi = prepare(geom, spec, params).amplitudes
    adjoint = _hamiltonian_apply(psi, diagonal, lam)
    value = float(np.vdot(psi, adjoint).real)
    gradient = np.zeros(spec.num_params)

    for position in range(len(schedule) - 1, -1, -1):
        op, index = schedule[position]
        theta = params[index]
        if op == ELECTRIC:
            gradient[index] = 2 * np.vdot(adjoint, 1j * diagonal * psi).real
            undo = np.exp(-1j * theta * diagonal)
            psi, adjoint = psi * undo, adjoint * undo
        elif op == MAGNETIC:
            gradient[index] = 2 * np.vdot(adjoint, 1j * apply_magnetic_term(psi)).real
            psi, adjoint = rotate_magnetic(psi, -theta), rotate_magnetic(adjoint, -theta)
        else:
            flipped = apply_magnetic_term(psi)
            mean = np.vdot(psi, flipped).real
            # d psi / d beta = H_B psi - <H_B> psi, the second term from renormalization
            gradient[index] = 2 * np.vdot(adjoint, flipped - mean * psi).real
            if position > 0:
                previous = dissipate(psi, -theta)
                scale = 1.0 / np.sqrt(np.sum(np.abs(previous) ** 2))
                overlap = np.vdot(psi, adjoint).real
                adjoint = (dissipate(adjoint, theta) - overlap * dissipate(psi, theta)) / scale
                psi = previous * scale
    return value, gradient


def _generator_terms(geom, op):
    return geom.num_links if op == ELECTRIC else geom.num_plaquettes


def auxiliary_expectation_count(geom, spec):
    """Expectation values the parameter-shift assembly needs: two per generator term."""
    return sum(2 * _generator_terms(geom, op) for op, _ in layer_schedule(spec))


def parameter_shift_gradient(geom, spec, params, lam, return_count=False):
    """Gradient assembled from expectation values of states with one extra
    P_n or X_l insertion, the way a device would estimate it."""
    if geom.d > settings.MAX_PARAMETER_SHIFT_D:
        raise SizeGuardError(
            f"parameter-shift gradient limited to d <= {settings.MAX_PARAMETER_SHIFT_D}"
        )
    params = _check_params(spec, params)
    table = field_table(geom)
    diagonal = table.diagonal()
    schedule = layer_schedule(spec)

    states = []
    amplitudes = reference_for(geom, spec).amplitudes
    for op, index in schedule:
        amplitudes = _apply(op, amplitudes, params[index], diagonal)
        states.append(amplitudes)
    value = _expectation(states[-1], diagonal, lam)

    def finish(amplitudes, position):
        for op, index in schedule[position + 1:]:
            amplitudes = _apply(op, amplitudes, params[index], diagonal)
        return _expectation(amplitudes, diagonal, lam)

    gradient = np.zeros(spec.num_params)
    evaluations = 0
    for position, (op, index) in enumerate(schedule):
        psi = states[position]
        total = 0.0
        if op == DISSIPATIVE:
            for n in range(geom.num_plaquettes):
                inserted = flip_plaquette(psi, n)
                plus = finish(psi + inserted, position)
                minus = finish(psi - inserted, position)
                total += (plus - minus) / 2
                evaluations += 2
            # <H_B> of the dissipated reference is known in closed form
            total -= 2 * geom.num_plaquettes * np.tanh(2 * params[index]) * value
        else:
            for term in range(_generator_terms(geom, op)):
                if op == ELECTRIC:
                    inserted = 1j * table.link_sign(term) * psi
                else:
                    inserted = 1j * flip_plaquette(psi, term)
                plus = finish((psi + inserted) / np.sqrt(2), position)
                minus = finish((psi - inserted) / np.sqrt(2), position)
                total += plus - minus
                evaluations += 2
        gradient[index] = total

    if return_count:
        return gradient, evaluations
    return gradient


# Optimization
# --------------------------
def minimize(geom, spec, lam, seed_params, bounds=None, strict=False):
    """Bound-constrained L-BFGS-B descent from `seed_params`.

    Returns the wrapped optimum and its energy. When the line search gives up,
    the best point seen is returned (or OptimizerAbort raised if `strict`).
    """
    seed_params = _check_params(spec, seed_params)
    free = free_indices(spec)
    bounds = bounds or bounds_for(spec)
    for i in free:
        low, high = bounds[i]
        if (low is not None and seed_params[i] < low) or (high is not None and seed_params[i] > high):
            raise ParameterError(f"seed parameter {i}={seed_params[i]} outside bounds {bounds[i]}")

    best = {"energy": np.inf, "params": seed_params.copy()}

    def objective(x):
        full = seed_params.copy()
        full[free] = x
        value, gradient = energy_gradient_adjoint(geom, spec, full, lam)
        if value < best["energy"]:
            best["energy"], best["params"] = value, full
        return value, gradient[free]

    result = scipy_minimize(
        objective,
        seed_params[free],
        jac=True,
        method="L-BFGS-B",
        bounds=[bounds[i] for i in free],
        options={
            "maxiter": settings.LBFGS_MAXITER,
            "gtol": settings.LBFGS_GTOL,
            "ftol": settings.LBFGS_FTOL,
            "maxcor": settings.LBFGS_MAXCOR,
        },
    )
    if result.status == 2 or "ABNORMAL" in str(result.message).upper():
        message = f"L-BFGS-B stopped without progress at lam={lam}: {result.message}"
        if strict:
            raise OptimizerAbort(message, wrap_params(spec, best["params"]), best["energy"])
        logger.debug(message)

    return wrap_params(spec, best["params"]), float(best["energy"])


def _perturb(spec, params, delta, rng):
    free = free_indices(spec)
    out = np.array(params, dtype=float)
    out[free] += rng.normal(0.0, np.sqrt(delta), size=free.size)
    for op, index in layer_schedule(spec):
        if op == DISSIPATIVE:
            out[index] = np.clip(out[index], *settings.BETA_BOUNDS)
    return wrap_params(spec, out)


def sweep(geom, spec, lam_max, n_lambda, n_seeds, delta, master_seed,
          with_ed=True, max_workers=None):
    """Follow the optimum along an increasing lambda grid.

    At lam=0 the parameters are zero. At each later point n_seeds Gaussian
    perturbations of the previous optimum are optimized and the best kept;
    task k at grid point i is seeded with master_seed + i * n_seeds + k.
    """
    if n_lambda < 2 or n_seeds < 1 or delta <= 0:
        raise ParameterError("sweep needs n_lambda >= 2, n_seeds >= 1 and delta > 0")
    lambdas = np.linspace(0.0, lam_max, n_lambda)
    result = SweepResult(spec=spec, d=geom.d, master_seed=master_seed)
    started = time.perf_counter()

    eds = map_ordered(lambda lam: ground_state(geom, lam), lambdas, max_workers) if with_ed else None

    for i, lam in enumerate(lambdas):
        point_started = time.perf_counter()
        if i == 0:
            params = np.zeros(spec.num_params)
            value, seed = variational_energy(geom, spec, params, lam), master_seed
        else:
            previous = result.records[-1].params

            def restart(k):
                seed = master_seed + i * n_seeds + k
                start = _perturb(spec, previous, delta, np.random.default_rng(seed))
                found, found_energy = minimize(geom, spec, lam, start)
                return found_energy, k, found, seed

            outcomes = map_ordered(restart, range(n_seeds), max_workers)
            value, _, params, seed = min(outcomes, key=lambda o: (o[0], o[1]))

        state = prepare(geom, spec, params)
        record = SweepRecord(
            lam=float(lam),
            params=params,
            energy=float(value),
            seed=int(seed),
            wall_time=time.perf_counter() - point_started,
            magnetization=bulk_average_magnetization(state),
        )
        if eds is not None:
            ed_energy, ed_state = eds[i]
            record.ed_energy = ed_energy
            record.infidelity = infidelity(state, ed_state)
        result.records.append(record)
        logger.debug(f"{spec} d={geom.d} lam={lam:.4f}: E={value:.10f}")

    elapsed = humanize.naturaldelta(time.perf_counter() - started)
    logger.info(
        f"✅ Sweep {spec} d={geom.d} finished: {n_lambda} points in {elapsed}, "
        f"max relative error {result.max_relative_error}"
    )
    return result
