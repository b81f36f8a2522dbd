"""Exact ground states of the dual Hamiltonian H = -H_E - lam H_B."""
import logging
from functools import reduce

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from z2Project import settings

from .dual_engine import DualState, field_table, flip_plaquette
from .exceptions import SizeGuardError, SpectraConvergenceError
from .lattice import build_lattice

logger = logging.getLogger(__name__)


class SparseDualHamiltonian:
    """Matrix-free H: the -D(b) diagonal plus N_p bit flips with weight -lam."""

    def __init__(self, geom, lam):
        self.geometry = geom
        self.lam = float(lam)
        self.diagonal = -field_table(geom).diagonal().astype(float)

    @property
    def shape(self):
        return (self.geometry.dimension, self.geometry.dimension)

    @property
    def norm_estimate(self):
        return self.geometry.num_links + abs(self.lam) * self.geometry.num_plaquettes

    def matvec(self, vector):
        vector = np.asarray(vector).reshape(-1)
        out = self.diagonal * vector
        for n in range(self.geometry.num_plaquettes):
            out = out - self.lam * flip_plaquette(vector, n)
        return out

    def as_linear_operator(self):
        return LinearOperator(self.shape, matvec=self.matvec, dtype=float)

    def to_dense(self):
        dim = self.geometry.dimension
        if dim > 4096:
            raise SizeGuardError(f"dense dual Hamiltonian of dimension {dim} refused")
        matrix = np.diag(self.diagonal)
        indices = np.arange(dim)
        for n in range(self.geometry.num_plaquettes):
            matrix[indices ^ (1 << n), indices] -= self.lam
        return matrix


def _fix_sign(vector):
    pivot = np.argmax(np.abs(vector))
    return vector if vector[pivot] >= 0 else -vector


def ground_state(geom, lam, tol=settings.KRYLOV_TOL):
    if geom.num_plaquettes > settings.MAX_DUAL_PLAQUETTES:
        raise SizeGuardError(
            f"N_p={geom.num_plaquettes} exceeds the ED guard ({settings.MAX_DUAL_PLAQUETTES})"
        )
    hamiltonian = SparseDualHamiltonian(geom, lam)
    dim = geom.dimension

    if dim <= settings.DENSE_DUAL_DIMENSION:
        eigenvalues, eigenvectors = np.linalg.eigh(hamiltonian.to_dense())
        value, vector = eigenvalues[0], eigenvectors[:, 0]
    else:
        # ARPACK's implicitly restarted Lanczos reorthogonalizes its basis fully
        rng = np.random.default_rng(settings.KRYLOV_SEED)
        try:
            values, vectors = eigsh(
                hamiltonian.as_linear_operator(),
                k=1,
                which="SA",
                v0=rng.standard_normal(dim),
                tol=0.1 * tol,  # ARPACK bounds the residual by its tol times |E|
                maxiter=settings.KRYLOV_MAX_ITER,
            )
        except ArpackNoConvergence as e:
            residual = np.inf
            if len(e.eigenvalues):
                v = e.eigenvectors[:, 0]
                residual = float(np.linalg.norm(hamiltonian.matvec(v) - e.eigenvalues[0] * v))
            raise SpectraConvergenceError(
                f"Lanczos did not converge for d={geom.d}, lam={lam}", residual
            ) from e
        value, vector = values[0], vectors[:, 0]

    vector = _fix_sign(vector / np.linalg.norm(vector))
    residual = float(np.linalg.norm(hamiltonian.matvec(vector) - value * vector))
    if residual > max(tol, 1e-12) * hamiltonian.norm_estimate:
        raise SpectraConvergenceError(
            f"ground state residual {residual:.3e} too large for d={geom.d}, lam={lam}", residual
        )
    logger.debug(f"ED d={geom.d} lam={lam}: E0={value:.12f} residual={residual:.2e}")
    return float(value), DualState(geom, vector.astype(complex))


def dual_spectrum(geom, lam):
    return np.linalg.eigvalsh(SparseDualHamiltonian(geom, lam).to_dense())


# Full space (X basis: bit l set means X_l = -1)
# --------------------------
_IDENTITY = sparse.identity(2, format="csr")
_PAULI_Z = sparse.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))
_PAULI_X = sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))


def _string_operator(site_operator, sites, num_sites):
    factors = [_IDENTITY] * num_sites
    for site in sites:
        factors[num_sites - 1 - site] = site_operator
    return reduce(lambda a, b: sparse.kron(a, b, format="csr"), factors)


def full_electric_string(geom, links):
    """prod X_l over `links`, diagonal in the X basis."""
    return _string_operator(_PAULI_Z, links, geom.num_links)


def full_magnetic_string(geom, links):
    """prod Z_l over `links`, a bit flip in the X basis."""
    return _string_operator(_PAULI_X, links, geom.num_links)


def full_hamiltonian(geom, lam):
    if geom.num_links > 16:
        raise SizeGuardError(f"full-space Hamiltonian on {geom.num_links} links refused")
    electric = sum(full_electric_string(geom, [link]) for link in range(geom.num_links))
    magnetic = sum(full_magnetic_string(geom, p.links) for p in geom.plaquettes)
    return (-electric - lam * magnetic).tocsr()


def full_space_sector_check(d, lam, atol=1e-8):
    """Compare the dual spectrum with the full spectrum restricted to G_n=+1, logical X=+1."""
    if d > settings.MAX_SECTOR_CHECK_D:
        raise SizeGuardError(f"full-space sector check is limited to d <= {settings.MAX_SECTOR_CHECK_D}")
    geom = build_lattice(d)
    hamiltonian = full_hamiltonian(geom, lam)

    keep = np.ones(1 << geom.num_links, dtype=bool)
    for vertex in geom.vertices:
        keep &= full_electric_string(geom, vertex.links).diagonal() > 0
    keep &= full_electric_string(geom, geom.logical_x_path).diagonal() > 0
    sector = np.flatnonzero(keep)

    projected = hamiltonian[sector][:, sector].toarray()
    full_values = np.linalg.eigvalsh(projected)
    dual_values = dual_spectrum(geom, lam)
    deviation = (
        float(np.max(np.abs(full_values - dual_values)))
        if full_values.shape == dual_values.shape else np.inf
    )
    report = {
        "d": d,
        "lam": lam,
        "sector_dimension": int(sector.size),
        "dual_dimension": geom.dimension,
        "max_deviation": deviation,
        "matches": bool(deviation <= atol),
        "full_eigenvalues": full_values,
        "dual_eigenvalues": dual_values,
    }
    logger.info(
        f"✅ Sector check d={d} lam={lam}: {sector.size} states, max deviation {deviation:.2e}"
    )
    return report
