"""Geometry of the d x d lattice with surface-code-like boundaries.

Vertices sit at integer (column, row) with columns 0..d-1 and rows 0..d.
Rows 0 and d are the rough top/bottom edges: they carry dangling vertical
links but no Gauss-law operator. Plaquette (c, r) spans columns c..c+1 and
rows r..r+1, so the bottom and top plaquette rows have three links.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import GeometryError
from .models import Link, Plaquette, Vertex

logger = logging.getLogger(__name__)

SLOT_NAMES = ("top", "right", "bottom", "left")


@dataclass(frozen=True, eq=False)
class LatticeGeometry:
    d: int
    links: tuple
    plaquettes: tuple
    vertices: tuple
    link_adjacency: tuple
    incidence: np.ndarray
    dual_paths: tuple
    logical_x_path: tuple

    @property
    def num_links(self):
        return len(self.links)

    @property
    def num_plaquettes(self):
        return len(self.plaquettes)

    @property
    def dimension(self):
        """Dimension of the gauge-fixed sector, 2^N_p."""
        return 1 << self.num_plaquettes

    @cached_property
    def plaquette_link_masks(self):
        """Link bit mask of every plaquette, as Python ints."""
        return tuple(sum(1 << link for link in p.links) for p in self.plaquettes)

    @cached_property
    def boundary_links(self):
        """Links contained in a single plaquette (left and right edges)."""
        return tuple(l for l, adj in enumerate(self.link_adjacency) if len(adj) == 1)

    @cached_property
    def dangling_links(self):
        """Vertical links attached to one vertex only (top and bottom edges)."""
        counts = np.zeros(self.num_links, dtype=int)
        for vertex in self.vertices:
            counts[list(vertex.links)] += 1
        return tuple(int(l) for l in np.flatnonzero(counts == 1))

    @cached_property
    def bulk_plaquettes(self):
        interior = tuple(
            p.id for p in self.plaquettes
            if not p.is_boundary and all(len(self.link_adjacency[l]) == 2 for l in p.links)
        )
        if interior:
            return interior
        four_link = tuple(p.id for p in self.plaquettes if not p.is_boundary)
        if four_link:
            return four_link
        return tuple(range(self.num_plaquettes))

    def plaquette_at(self, column, row):
        if not (0 <= column <= self.d - 2 and 0 <= row <= self.d - 1):
            raise GeometryError(f"no plaquette at ({column},{row}) for d={self.d}")
        return self.plaquettes[row * (self.d - 1) + column]

    def link_at(self, column, row, orientation):
        return self._link_index[(column, row, orientation)]

    @cached_property
    def _link_index(self):
        return {(l.column, l.row, l.orientation): l.id for l in self.links}

    @cached_property
    def central_vertex(self):
        column, row = (self.d - 1) // 2, self.d // 2
        return self.vertices[(row - 1) * self.d + column]

    def describe(self):
        """JSON-ready summary used by `lattice info`."""
        return {
            "d": self.d,
            "num_links": self.num_links,
            "num_plaquettes": self.num_plaquettes,
            "num_vertices": len(self.vertices),
            "links": [
                {"id": l.id, "column": l.column, "row": l.row, "orientation": l.orientation,
                 "plaquettes": list(self.link_adjacency[l.id])}
                for l in self.links
            ],
            "plaquettes": [
                {"id": p.id, "column": p.column, "row": p.row, "links": list(p.links),
                 "dual_path": list(self.dual_paths[p.id])}
                for p in self.plaquettes
            ],
            "vertices": [
                {"id": v.id, "column": v.column, "row": v.row, "links": list(v.links)}
                for v in self.vertices
            ],
            "logical_x_path": list(self.logical_x_path),
        }


def build_lattice(d):
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise GeometryError(f"lattice distance must be an integer >= 2, got {d!r}")
    d = int(d)

    links = []
    index = {}
    for row in range(d + 1):
        for column in range(d):
            if column <= d - 2 and 1 <= row <= d - 1:
                index[(column, row, "x")] = len(links)
                links.append(Link(len(links), column, row, "x"))
            if row <= d - 1:
                index[(column, row, "y")] = len(links)
                links.append(Link(len(links), column, row, "y"))

    plaquettes = []
    for row in range(d):
        for column in range(d - 1):
            slots = (
                index.get((column, row + 1, "x")),
                index[(column + 1, row, "y")],
                index.get((column, row, "x")),
                index[(column, row, "y")],
            )
            plaquettes.append(Plaquette(len(plaquettes), column, row, slots))

    vertices = []
    for row in range(1, d):
        for column in range(d):
            candidates = (
                (column - 1, row, "x"),
                (column, row, "x"),
                (column, row - 1, "y"),
                (column, row, "y"),
            )
            vertex_links = tuple(index[key] for key in candidates if key in index)
            vertices.append(Vertex(len(vertices), column, row, vertex_links))

    adjacency = [[] for _ in links]
    incidence = np.zeros((len(links), len(plaquettes)), dtype=np.uint8)
    for p in plaquettes:
        for link in p.links:
            adjacency[link].append(p.id)
            incidence[link, p.id] = 1
    incidence.setflags(write=False)

    dual_paths = tuple(
        tuple(index[(k, p.row, "y")] for k in range(p.column + 1)) for p in plaquettes
    )
    logical_x_path = tuple(index[(k, 0, "y")] for k in range(d))

    geom = LatticeGeometry(
        d=d,
        links=tuple(links),
        plaquettes=tuple(plaquettes),
        vertices=tuple(vertices),
        link_adjacency=tuple(tuple(adj) for adj in adjacency),
        incidence=incidence,
        dual_paths=dual_paths,
        logical_x_path=logical_x_path,
    )
    logger.debug(f"Built d={d} lattice: {geom.num_links} links, {geom.num_plaquettes} plaquettes")
    return geom


def dual_path(geom, n):
    if not 0 <= n < geom.num_plaquettes:
        raise GeometryError(f"plaquette index {n} out of range for d={geom.d}")
    return list(geom.dual_paths[n])


def wilson_rectangle(geom, l, m, anchor):
    """Plaquette mask of the l x m block whose lower-left plaquette is `anchor`.

    l counts columns and m counts rows. A block with a zero side is the
    empty loop and yields mask 0.
    """
    if l < 0 or m < 0:
        raise GeometryError(f"rectangle sides must be non-negative, got {l}x{m}")
    if not 0 <= anchor < geom.num_plaquettes:
        raise GeometryError(f"anchor {anchor} out of range for d={geom.d}")
    start = geom.plaquettes[anchor]
    if start.column + l > geom.d - 1 or start.row + m > geom.d:
        raise GeometryError(
            f"{l}x{m} rectangle anchored at {start} does not fit in the d={geom.d} lattice"
        )
    mask = 0
    for row in range(start.row, start.row + m):
        for column in range(start.column, start.column + l):
            mask |= 1 << geom.plaquette_at(column, row).id
    return mask


def centered_anchor(geom, l, m):
    """Anchor placing an l x m block as close to the lattice centre as possible."""
    column = max((geom.d - 1 - l) // 2, 0)
    row = max((geom.d - m) // 2, 0)
    return geom.plaquette_at(column, row).id


def link_mask_of(geom, plaquette_mask):
    """XOR of the link masks of the plaquettes set in `plaquette_mask`."""
    out = 0
    for n, link_mask in enumerate(geom.plaquette_link_masks):
        if plaquette_mask >> n & 1:
            out ^= link_mask
    return out


def gf2_rank(vectors):
    """Rank over GF(2) of integers read as bit vectors."""
    pivots = {}
    rank = 0
    for vector in vectors:
        v = int(vector)
        while v:
            top = v.bit_length() - 1
            if top not in pivots:
                pivots[top] = v
                rank += 1
                break
            v ^= pivots[top]
    return rank
