"""State-vector engine on the gauge-fixed sector.

Basis index b stands for prod_n P_n^{b_n} |Omega_E>. In this basis the
electric term is diagonal, D(b) = sum_l (-1)^(sum_{p in l} b_p), and every
plaquette operator flips one bit.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from z2Project import settings

from .exceptions import EntropyBudgetError, ParameterError, SizeGuardError, UndefinedCreutzRatio
from .lattice import centered_anchor, gf2_rank, wilson_rectangle

logger = logging.getLogger(__name__)

WILSON_FLOOR = 1e-14


@dataclass(eq=False)
class DualState:
    geometry: object
    amplitudes: np.ndarray

    def copy(self):
        return DualState(self.geometry, self.amplitudes.copy())

    @property
    def norm(self):
        return _norm(self.amplitudes)

    @property
    def probabilities(self):
        return np.abs(self.amplitudes) ** 2


class FieldTable:
    """Link-to-plaquette structure of the electric term for one geometry."""

    def __init__(self, geom):
        if geom.num_plaquettes > settings.MAX_DUAL_PLAQUETTES:
            raise SizeGuardError(
                f"N_p={geom.num_plaquettes} exceeds the dual-engine guard "
                f"({settings.MAX_DUAL_PLAQUETTES})"
            )
        self.geometry = geom
        self.adjacency = geom.link_adjacency
        self._diagonal = None
        if geom.num_plaquettes <= settings.PRECOMPUTED_FIELD_PLAQUETTES:
            self._diagonal = self._evaluate()

    @property
    def indices(self):
        return np.arange(self.geometry.dimension, dtype=np.int64)

    def link_parity(self, link, indices=None):
        """Parity of b over the plaquettes containing `link` (0/1 array)."""
        idx = self.indices if indices is None else indices
        parity = np.zeros(idx.shape, dtype=np.int64)
        for p in self.adjacency[link]:
            parity ^= (idx >> p) & 1
        return parity

    def link_sign(self, link):
        """Eigenvalue of X on `link` for every basis state."""
        return 1 - 2 * self.link_parity(link)

    def _evaluate(self):
        idx = self.indices
        flips = np.zeros(idx.shape, dtype=np.int64)
        for link in range(self.geometry.num_links):
            flips += self.link_parity(link, idx)
        return (self.geometry.num_links - 2 * flips).astype(np.int64)

    def diagonal(self):
        if self._diagonal is None:
            return self._evaluate()
        return self._diagonal

    def contributions(self, b):
        """Per-link +/-1 terms of D(b): two-bit couplings and one-bit boundary fields."""
        out = []
        for adjacent in self.adjacency:
            bit = 0
            for p in adjacent:
                bit ^= (b >> p) & 1
            out.append(1 - 2 * bit)
        return np.array(out, dtype=np.int64)


@lru_cache(maxsize=8)
def field_table(geom):
    return FieldTable(geom)


# Kernels
# --------------------------
def _norm(amplitudes):
    return float(np.sqrt(np.sum(amplitudes.real ** 2 + amplitudes.imag ** 2)))


def _bit_view(amplitudes, n):
    # axis 1 is bit n of the basis index
    return amplitudes.reshape(-1, 2, 1 << n)


def flip_plaquette(amplitudes, n):
    """Amplitudes with bit n of every index flipped (P_n applied)."""
    return _bit_view(amplitudes, n)[:, ::-1, :].reshape(-1).copy()


def _mix(amplitudes, n, diagonal, offdiagonal):
    view = _bit_view(amplitudes, n)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :].copy()
    view[:, 0, :] = diagonal * a0 + offdiagonal * a1
    view[:, 1, :] = diagonal * a1 + offdiagonal * a0


def dissipate(amplitudes, beta):
    """Unnormalized prod_n (cosh beta + sinh beta P_n) applied to a copy."""
    out = np.array(amplitudes, dtype=complex)
    num_plaquettes = out.size.bit_length() - 1
    ch, sh = np.cosh(beta), np.sinh(beta)
    for n in range(num_plaquettes):
        _mix(out, n, ch, sh)
    return out


def rotate_magnetic(amplitudes, alpha):
    """exp(i alpha H_B) applied to a copy."""
    out = np.array(amplitudes, dtype=complex)
    num_plaquettes = out.size.bit_length() - 1
    c, s = np.cos(alpha), 1j * np.sin(alpha)
    for n in range(num_plaquettes):
        _mix(out, n, c, s)
    return out


def apply_magnetic_term(amplitudes):
    """H_B applied to the amplitudes."""
    out = np.zeros_like(amplitudes, dtype=complex)
    num_plaquettes = amplitudes.size.bit_length() - 1
    for n in range(num_plaquettes):
        out += flip_plaquette(amplitudes, n)
    return out


# States
# --------------------------
def init_reference(geom):
    amplitudes = np.zeros(geom.dimension, dtype=complex)
    amplitudes[0] = 1.0
    return DualState(geom, amplitudes)


def uniform_state(geom):
    """|Omega_B>: equal superposition of all plaquette configurations."""
    amplitudes = np.full(geom.dimension, 1.0 / np.sqrt(geom.dimension), dtype=complex)
    return DualState(geom, amplitudes)


def basis_state(geom, b):
    amplitudes = np.zeros(geom.dimension, dtype=complex)
    amplitudes[b] = 1.0
    return DualState(geom, amplitudes)


def normalized(geom, amplitudes):
    amplitudes = np.asarray(amplitudes, dtype=complex)
    return DualState(geom, amplitudes / _norm(amplitudes))


# Layer operators
# --------------------------
def apply_dissipative(state, beta, return_norm=False):
    if beta < 0:
        raise ParameterError(f"dissipation strength must be >= 0, got {beta}")
    out = dissipate(state.amplitudes, beta)
    scale = _norm(out)
    result = DualState(state.geometry, out / scale)
    if return_norm:
        return result, scale
    return result


def apply_electric_phase(state, alpha):
    diagonal = field_table(state.geometry).diagonal()
    return DualState(state.geometry, state.amplitudes * np.exp(1j * alpha * diagonal))


def apply_magnetic_phase(state, alpha):
    return DualState(state.geometry, rotate_magnetic(state.amplitudes, alpha))


# Observables
# --------------------------
def electric_expectation(state):
    diagonal = field_table(state.geometry).diagonal()
    return float(np.sum(state.probabilities * diagonal))


def magnetic_expectation(state):
    amplitudes = state.amplitudes
    total = 0.0
    for n in range(state.geometry.num_plaquettes):
        total += np.sum((amplitudes.conj() * flip_plaquette(amplitudes, n)).real)
    return float(total)


def energy(state, lam):
    return -electric_expectation(state) - lam * magnetic_expectation(state)


def dual_magnetization(state, n):
    view = _bit_view(state.probabilities, n)
    return float(np.sum(view[:, 0, :]) - np.sum(view[:, 1, :]))


def bulk_average_magnetization(state):
    bulk = state.geometry.bulk_plaquettes
    return float(np.mean([dual_magnetization(state, n) for n in bulk]))


def wilson_expectation(state, mask):
    amplitudes = state.amplitudes
    partner = np.arange(amplitudes.size, dtype=np.int64) ^ mask
    return float(np.sum(amplitudes[partner].conj() * amplitudes).real)


def creutz_ratio(state, l, anchor=None):
    """chi(l,l) from the four rectangles sharing one lower-left anchor."""
    geom = state.geometry
    if anchor is None:
        anchor = centered_anchor(geom, l, l)
    sides = {"ll": (l, l), "mm": (l - 1, l - 1), "ml": (l - 1, l), "lm": (l, l - 1)}
    loops = {
        key: wilson_expectation(state, wilson_rectangle(geom, a, b, anchor))
        for key, (a, b) in sides.items()
    }
    if any(value <= WILSON_FLOOR for value in loops.values()):
        raise UndefinedCreutzRatio(
            f"Creutz ratio chi({l},{l}) undefined: non-positive Wilson loop in {loops}", loops
        )
    return float(-np.log(loops["ll"] * loops["mm"] / (loops["ml"] * loops["lm"])))


def infidelity(state, reference):
    overlap = np.vdot(reference.amplitudes, state.amplitudes)
    return float(max(0.0, 1.0 - abs(overlap) ** 2))


# Entanglement
# --------------------------
def _region_keys(table, region, indices):
    keys = np.zeros(indices.shape, dtype=np.int64)
    for k, link in enumerate(region):
        keys |= table.link_parity(link, indices) << k
    return keys


def _region_rank(geom, region):
    columns = []
    for n in range(geom.num_plaquettes):
        columns.append(sum(int(geom.incidence[link, n]) << k for k, link in enumerate(region)))
    return gf2_rank(columns)


def _group_matrix(state, subset):
    geom = state.geometry
    region = sorted(set(int(l) for l in subset))
    if any(not 0 <= l < geom.num_links for l in region):
        raise ParameterError(f"link subset {region} has ids outside 0..{geom.num_links - 1}")
    complement = [l for l in range(geom.num_links) if l not in set(region)]
    if len(region) > 62 or len(complement) > 62:
        raise SizeGuardError("link region too large to pack into 64-bit keys")

    rank = min(_region_rank(geom, region), _region_rank(geom, complement))
    if (1 << rank) > settings.MAX_ENTROPY_GROUPS:
        raise EntropyBudgetError(
            f"entropy of {len(region)} links needs 2^{rank} groups "
            f"(limit {settings.MAX_ENTROPY_GROUPS})", rank
        )

    table = field_table(geom)
    support = np.flatnonzero(state.probabilities > 0)
    values = state.amplitudes[support]
    _, group_ids = np.unique(_region_keys(table, complement, support), return_inverse=True)
    _, image_ids = np.unique(_region_keys(table, region, support), return_inverse=True)
    shape = (group_ids.max() + 1, image_ids.max() + 1)
    return sparse.csr_matrix((values, (group_ids.ravel(), image_ids.ravel())), shape=shape)


def _gram(groups):
    if groups.shape[0] <= groups.shape[1]:
        return groups @ groups.conj().T
    return groups.conj().T @ groups


def renyi2_entropy(state, subset):
    """Second Renyi entropy (bits) of the links in `subset`."""
    gram = _gram(_group_matrix(state, subset))
    purity = float(np.sum(np.abs(gram.data) ** 2))
    return float(-np.log2(min(purity, 1.0)))


def von_neumann_entropy(state, subset):
    gram = _gram(_group_matrix(state, subset)).toarray()
    eigenvalues = np.linalg.eigvalsh(gram)
    eigenvalues = eigenvalues[eigenvalues > 1e-15]
    return float(-np.sum(eigenvalues * np.log2(eigenvalues)))


def _star_partition(geom):
    vertex = geom.central_vertex
    horizontal = tuple(l for l in vertex.links if geom.links[l].orientation == "x")
    lower = (geom.link_at(vertex.column, vertex.row - 1, "y"),)
    upper = (geom.link_at(vertex.column, vertex.row, "y"),)
    return horizontal, lower, upper


def _block_is_interior(geom):
    vertex = geom.central_vertex
    c, r = vertex.column, vertex.row
    return c >= 2 and c + 1 <= geom.d - 2 and r >= 2 and r + 1 <= geom.d - 1


def _block_partition(geom):
    vertex = geom.central_vertex
    c, r = vertex.column, vertex.row
    x = lambda column, row: geom.link_at(column, row, "x")
    y = lambda column, row: geom.link_at(column, row, "y")
    lower_left = (x(c - 1, r), y(c - 1, r - 1), x(c - 1, r - 1))
    lower_right = (x(c, r), y(c, r - 1), x(c, r - 1), y(c + 1, r - 1))
    upper = (y(c, r), x(c - 1, r + 1), x(c, r + 1), y(c - 1, r), y(c + 1, r))
    return lower_left, lower_right, upper


def centered_partition(geom, wide=None):
    """Regions (A, B, C) around the vertex nearest the lattice centre.

    The wide partition covers the 2x2 plaquette block around that vertex:
    A is the lower-left sector, B the lower-right sector with the whole
    lower-right plaquette, C the upper half. It needs the block's outer
    ring of plaquettes to exist, so by default it is used from d=5 up.
    The star partition keeps to the vertex star: A holds its horizontal
    links, B its lower vertical link and C its upper vertical link.
    """
    if wide is None:
        wide = _block_is_interior(geom)
    if not wide:
        return _star_partition(geom)
    if not _block_is_interior(geom):
        raise ParameterError(f"no interior 2x2 block around the centre for d={geom.d}")
    partition = _block_partition(geom)
    rank = _region_rank(geom, set().union(*partition))
    if (1 << rank) > settings.MAX_ENTROPY_GROUPS:
        logger.debug(f"Block partition rank {rank} over budget for d={geom.d}, using the vertex star")
        return _star_partition(geom)
    return partition


def topological_entropy(state, partition=None):
    a, b, c = partition if partition is not None else centered_partition(state.geometry)
    a, b, c = set(a), set(b), set(c)
    if a & b or a & c or b & c:
        raise ParameterError("entropy regions must be disjoint")
    s = lambda *regions: renyi2_entropy(state, set().union(*regions))
    return s(a) + s(b) + s(c) - s(a, b) - s(a, c) - s(b, c) + s(a, b, c)


# Full-space mapping
# --------------------------
def to_full_xbasis(state):
    """Full 2^N amplitude vector in the X basis (bit l set means X_l = -1)."""
    geom = state.geometry
    if geom.num_links > settings.MAX_FULL_SPACE_LINKS:
        raise SizeGuardError(
            f"N={geom.num_links} links exceeds the full-space guard ({settings.MAX_FULL_SPACE_LINKS})"
        )
    indices = np.arange(geom.dimension, dtype=np.int64)
    configs = np.zeros(geom.dimension, dtype=np.int64)
    for n, link_mask in enumerate(geom.plaquette_link_masks):
        configs ^= ((indices >> n) & 1) * link_mask
    full = np.zeros(1 << geom.num_links, dtype=complex)
    full[configs] = state.amplitudes
    return full / _norm(full)
