"""Finite-size scaling of magnetization curves.

With x = 1/nu and the correction exponent theta held fixed:

    chi*(L)   = a'' L^x (1 + b'' L^(-theta x))
    lam*(L)   = lam_c + a' L^-x (1 + b' L^(-theta x))
    M(lam_c)  = a L^(-beta x) (1 + b L^(-theta x))

Amplitudes enter linearly, so each fit only searches its exponent.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from z2Project import settings

from .exceptions import FitError
from .models import FitResult

logger = logging.getLogger(__name__)

COLLAPSE_GRID = 101


@dataclass
class Peak:
    lam: float
    chi: float
    censored: bool


@dataclass
class LawFit:
    value: float
    stderr: float
    amplitude: float
    correction: float
    residuals: np.ndarray = field(repr=False)


def susceptibility(curve):
    """Interior grid and dM/dlam from second-order central differences."""
    if curve.lambdas.size < 5:
        raise FitError(f"{curve}: susceptibility needs at least 5 grid points")
    derivative = np.gradient(curve.magnetization, curve.lambdas, edge_order=2)
    return curve.lambdas[1:-1], derivative[1:-1]


def peak(curve):
    lambdas, derivative = susceptibility(curve)
    magnitude = np.abs(derivative)
    k = int(np.argmax(magnitude))
    if k == 0 or k == magnitude.size - 1 or magnitude[k] == 0:
        logger.warning(f"Susceptibility peak of {curve} sits on the grid edge")
        return Peak(float(lambdas[k]), float(magnitude[k]), True)

    window = slice(k - 1, k + 2)
    curvature, slope, offset = np.polyfit(lambdas[window], magnitude[window], 2)
    if curvature >= 0:
        return Peak(float(lambdas[k]), float(magnitude[k]), False)
    vertex = -slope / (2 * curvature)
    return Peak(float(vertex), float(np.polyval((curvature, slope, offset), vertex)), False)


def magnetization_at(curve, lam):
    if not curve.lambdas[0] <= lam <= curve.lambdas[-1]:
        raise FitError(f"lam={lam:.4f} lies outside the grid of {curve}")
    return float(np.interp(lam, curve.lambdas, curve.magnetization))


# Fits
# --------------------------
def _check_sizes(sizes, values, minimum=3):
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    if sizes.shape != values.shape:
        raise FitError("sizes and values differ in length")
    if np.unique(sizes).size < minimum:
        raise FitError(f"scaling fits need at least {minimum} distinct lattice sizes, got {np.unique(sizes).size}")
    order = np.argsort(sizes)
    return sizes[order], values[order]


def _linear_amplitudes(basis, values):
    coefficients, *_ = np.linalg.lstsq(basis, values, rcond=None)
    return coefficients, basis @ coefficients - values


def _power_law_fit(sizes, values, exponent_of, theta):
    """Multistart Levenberg-Marquardt on the single exponent of values = A L^e + C L^(e - theta x)."""
    log_sizes = np.log(sizes)

    def basis(q):
        leading, step = exponent_of(q)
        return np.column_stack([np.exp(leading * log_sizes), np.exp((leading - theta * step) * log_sizes)])

    def residuals(q):
        with np.errstate(over="ignore", invalid="ignore"):
            _, r = _linear_amplitudes(basis(q[0]), values)
        return np.nan_to_num(r, nan=1e12, posinf=1e12, neginf=-1e12)

    magnitudes = np.logspace(-1, 1, settings.FIT_STARTS // 2)
    starts = np.concatenate([magnitudes, -magnitudes])
    best = None
    for start in starts:
        try:
            solution = least_squares(residuals, x0=[start], method="lm")
        except ValueError:
            continue
        if not np.isfinite(solution.cost):
            continue
        if best is None or solution.cost < best.cost - 1e-15:
            best = solution
    if best is None:
        raise FitError("no multistart initialization converged")

    q = float(best.x[0])
    (amplitude, correction_amplitude), r = _linear_amplitudes(basis(q), values)
    dof = sizes.size - 3
    stderr = float("nan")
    jtj = float(np.sum(best.jac ** 2))
    if dof > 0 and jtj > 0:
        stderr = float(np.sqrt(np.sum(r ** 2) / dof / jtj))
    correction = correction_amplitude / amplitude if amplitude else float("nan")
    return q, stderr, float(amplitude), float(correction), r


def fit_nu(sizes, peak_heights, theta=settings.SCALING_THETA):
    """nu from the growth of the susceptibility maximum."""
    sizes, heights = _check_sizes(sizes, peak_heights)
    x, x_stderr, amplitude, correction, r = _power_law_fit(sizes, heights, lambda q: (q, q), theta)
    if x == 0:
        raise FitError("susceptibility exponent 1/nu fitted to zero", residuals=r)
    nu = 1.0 / x
    return LawFit(nu, x_stderr / x ** 2, amplitude, correction, r)


def fit_lambda_c(sizes, peak_positions, nu, theta=settings.SCALING_THETA):
    """Extrapolated critical coupling; linear once nu is known."""
    sizes, positions = _check_sizes(sizes, peak_positions)
    x = 1.0 / nu
    basis = np.column_stack([
        np.ones_like(sizes), sizes ** -x, sizes ** (-x * (1 + theta)),
    ])
    (lambda_c, amplitude, correction_amplitude), r = _linear_amplitudes(basis, positions)
    stderr = float("nan")
    dof = sizes.size - 3
    if dof > 0:
        covariance = np.linalg.pinv(basis.T @ basis) * np.sum(r ** 2) / dof
        stderr = float(np.sqrt(covariance[0, 0]))
    correction = correction_amplitude / amplitude if amplitude else float("nan")
    return LawFit(float(lambda_c), stderr, float(amplitude), float(correction), r)


def fit_beta(sizes, magnetizations, nu, theta=settings.SCALING_THETA):
    """Order-parameter exponent from M(lam_c) across sizes."""
    sizes, values = _check_sizes(sizes, magnetizations)
    x = 1.0 / nu
    y, y_stderr, amplitude, correction, r = _power_law_fit(sizes, values, lambda q: (-q, x), theta)
    return LawFit(y * nu, y_stderr * abs(nu), amplitude, correction, r)


def collapse_score(curves, lambda_c, nu, beta):
    """Mean squared spread of the rescaled curves on their common x range."""
    if len({curve.size for curve in curves}) < 2:
        raise FitError("curve collapse needs at least 2 lattice sizes")
    rescaled = []
    for curve in curves:
        x = (curve.lambdas - lambda_c) * curve.size ** (1.0 / nu)
        y = curve.magnetization * curve.size ** (beta / nu)
        order = np.argsort(x)
        rescaled.append((x[order], y[order]))

    low = max(x[0] for x, _ in rescaled)
    high = min(x[-1] for x, _ in rescaled)
    if low >= high:
        raise FitError(f"rescaled curves do not overlap (x range [{low:.3g}, {high:.3g}])")
    grid = np.linspace(low, high, COLLAPSE_GRID)
    stacked = np.array([np.interp(grid, x, y) for x, y in rescaled])
    return float(np.mean(np.var(stacked, axis=0)))


def finite_size_scaling(curves, theta=settings.SCALING_THETA):
    """Run the nu, lambda_c and beta fits in sequence on one curve per size."""
    by_size = {}
    for curve in curves:
        if curve.size in by_size:
            raise FitError(f"two curves for d={curve.d}")
        by_size[curve.size] = curve

    peaks = {}
    for size, curve in sorted(by_size.items()):
        found = peak(curve)
        if found.censored:
            logger.warning(f"Dropping d={size}: susceptibility peak censored at lam={found.lam:.4f}")
            continue
        peaks[size] = found
    sizes = np.array(sorted(peaks), dtype=float)
    if sizes.size < 3:
        raise FitError(f"only {sizes.size} curves have an interior susceptibility peak")

    nu_fit = fit_nu(sizes, [peaks[s].chi for s in sizes], theta)
    lambda_fit = fit_lambda_c(sizes, [peaks[s].lam for s in sizes], nu_fit.value, theta)
    magnetizations = [magnetization_at(by_size[s], lambda_fit.value) for s in sizes]
    beta_fit = fit_beta(sizes, magnetizations, nu_fit.value, theta)

    result = FitResult(
        lambda_c=lambda_fit.value,
        lambda_c_stderr=lambda_fit.stderr,
        nu=nu_fit.value,
        nu_stderr=nu_fit.stderr,
        beta=beta_fit.value,
        beta_stderr=beta_fit.stderr,
        nuisance={
            "a": beta_fit.amplitude, "b": beta_fit.correction,
            "a_prime": lambda_fit.amplitude, "b_prime": lambda_fit.correction,
            "a_double_prime": nu_fit.amplitude, "b_double_prime": nu_fit.correction,
        },
        theta=theta,
        residuals={
            "nu": nu_fit.residuals.tolist(),
            "lambda_c": lambda_fit.residuals.tolist(),
            "beta": beta_fit.residuals.tolist(),
        },
    )
    logger.info(
        f"✅ Scaling fit over d={[int(s) for s in sizes]}: lambda_c={result.lambda_c:.4f}, "
        f"nu={result.nu:.4f}, beta={result.beta:.4f}"
    )
    return result
