"""Polygonal meshes of planar domains.

A :class:`Mesh` is built from vertex coordinates and counter-clockwise
vertex loops.  Edges, unit normals, areas, centroids and diameters are
derived once at construction and never change afterwards.

Edge normal convention: a boundary edge carries the outward normal; an
interior edge carries the outward normal of its lower-id neighbour, so it
points from the lower-id element into the higher-id one.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Voronoi, cKDTree

__all__ = [
    "MeshError",
    "MeshParseError",
    "MeshTopologyError",
    "DegenerateCellError",
    "Mesh",
    "RegularityReport",
    "build_uniform_triangular",
    "build_polygonal",
    "load_mesh",
    "save_mesh",
    "check_shape_regularity",
    "outward_normal",
]


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshTopologyError(MeshError):
    def __init__(self, message, edge=None):
        self.edge = edge
        super().__init__(message)


class DegenerateCellError(MeshError):
    pass


def _signed_area(xy):
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _polygon_centroid(xy):
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def _diameter(xy):
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d**2).sum(axis=-1)).max())


class Mesh:
    """Immutable 2D polygonal mesh.

    Parameters
    ----------
    vertices : (n_v, 2) array_like
    cells : sequence of int sequences
        Counter-clockwise vertex loops, one per element.
    h : float, optional
        Reported mesh parameter.  Defaults to ``max(h_T)``; uniform meshes
        override it with ``1/n``.
    """

    dimension = 2

    def __init__(self, vertices, cells, h=None):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertex coordinates must be finite")
        cells = [np.array(c, dtype=np.int64) for c in cells]
        nv = len(vertices)
        for t, c in enumerate(cells):
            if len(c) < 3:
                raise MeshError(f"element {t} has fewer than 3 vertices")
            if c.min() < 0 or c.max() >= nv:
                raise MeshError(f"element {t} references a missing vertex")
            if len(np.unique(c)) != len(c):
                raise MeshError(f"element {t} repeats a vertex")

        areas = np.empty(len(cells))
        centroids = np.empty((len(cells), 2))
        diameters = np.empty(len(cells))
        for t, c in enumerate(cells):
            xy = vertices[c]
            a = _signed_area(xy)
            if a <= 0.0:
                raise MeshError(f"element {t} is not counter-clockwise (signed area {a:g})")
            areas[t] = a
            centroids[t] = _polygon_centroid(xy)
            diameters[t] = _diameter(xy)

        # edges keyed by sorted endpoint pair
        edge_index = {}
        endpoints = []
        adjacency = []
        element_edges = []
        for t, c in enumerate(cells):
            ids = []
            for a, b in zip(c, np.roll(c, -1)):
                key = (int(min(a, b)), int(max(a, b)))
                e = edge_index.get(key)
                if e is None:
                    e = len(endpoints)
                    edge_index[key] = e
                    endpoints.append(key)
                    adjacency.append([t])
                else:
                    adjacency[e].append(t)
                    if len(adjacency[e]) > 2:
                        raise MeshTopologyError(
                            f"edge {e} (vertices {key[0]}, {key[1]}) is shared by "
                            f"{len(adjacency[e])} elements", edge=e)
                ids.append(e)
            element_edges.append(np.array(ids, dtype=np.int64))

        endpoints = np.array(endpoints, dtype=np.int64).reshape(-1, 2)
        ne = len(endpoints)
        edge_elements = np.full((ne, 2), -1, dtype=np.int64)
        for e, adj in enumerate(adjacency):
            adj = sorted(adj)
            edge_elements[e, : len(adj)] = adj

        p0 = vertices[endpoints[:, 0]]
        p1 = vertices[endpoints[:, 1]]
        d = p1 - p0
        lengths = np.hypot(d[:, 0], d[:, 1])
        if np.any(lengths <= 0.0):
            raise MeshError("zero-length edge")
        tangents = d / lengths[:, None]

        # outward normal of the lower-id neighbour
        normals = np.empty((ne, 2))
        element_signs = []
        for t, (c, eids) in enumerate(zip(cells, element_edges)):
            signs = np.empty(len(eids))
            for j, e in enumerate(eids):
                a, b = vertices[c[j]], vertices[c[(j + 1) % len(c)]]
                out = np.array([b[1] - a[1], a[0] - b[0]]) / lengths[e]
                if edge_elements[e, 0] == t:
                    normals[e] = out
                    signs[j] = 1.0
                else:
                    signs[j] = -1.0
            element_signs.append(signs)

        self._vertices = vertices
        self._cells = cells
        self._endpoints = endpoints
        self._edge_elements = edge_elements
        self._lengths = lengths
        self._tangents = tangents
        self._normals = normals
        self._midpoints = 0.5 * (p0 + p1)
        self._element_edges = element_edges
        self._element_signs = element_signs
        self._areas = areas
        self._centroids = centroids
        self._diameters = diameters
        self._h = float(diameters.max()) if h is None else float(h)
        for arr in (vertices, endpoints, edge_elements, lengths, tangents, normals,
                    self._midpoints, areas, centroids, diameters,
                    *cells, *element_edges, *element_signs):
            arr.setflags(write=False)

    # --- sizes -----------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self._vertices)

    @property
    def n_elements(self):
        return len(self._cells)

    @property
    def n_edges(self):
        return len(self._endpoints)

    @property
    def h(self):
        """Mesh parameter used in convergence tables."""
        return self._h

    # --- vertices / elements ----------------------------------------------
    @property
    def vertices(self):
        return self._vertices

    @property
    def cells(self):
        return self._cells

    @property
    def areas(self):
        return self._areas

    @property
    def centroids(self):
        return self._centroids

    @property
    def diameters(self):
        return self._diameters

    def element_vertices(self, t):
        return self._vertices[self._cells[t]]

    def element_edges(self, t):
        return self._element_edges[t]

    def edge_signs(self, t):
        """Per-edge +-1 with ``sign * n_e`` the outward normal of element ``t``."""
        return self._element_signs[t]

    # --- edges -------------------------------------------------------------
    @property
    def edges(self):
        """(n_e, 2) vertex ids, lower id first."""
        return self._endpoints

    @property
    def edge_elements(self):
        """(n_e, 2) adjacent element ids, ascending; -1 marks the missing side."""
        return self._edge_elements

    @property
    def edge_lengths(self):
        return self._lengths

    @property
    def edge_normals(self):
        return self._normals

    @property
    def edge_tangents(self):
        """Unit tangents pointing from the lower-id endpoint to the higher."""
        return self._tangents

    @property
    def edge_midpoints(self):
        return self._midpoints

    @property
    def boundary_edges(self):
        return self._edge_elements[:, 1] < 0

    def edge_points(self, e):
        a, b = self._endpoints[e]
        return self._vertices[a], self._vertices[b]

    # --- misc --------------------------------------------------------------
    def domain_area(self):
        """Area enclosed by the boundary edges (independent of the cell areas)."""
        total = 0.0
        for e in np.flatnonzero(self.boundary_edges):
            p0, p1 = self.edge_points(e)
            mid = 0.5 * (p0 + p1)
            total += 0.5 * self._lengths[e] * float(mid @ self._normals[e])
        return total

    def is_convex(self, t, tol=1e-12):
        xy = self.element_vertices(t)
        d1 = np.roll(xy, -1, axis=0) - xy
        d2 = np.roll(d1, -1, axis=0)
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        return bool(np.all(cross >= -tol * self._diameters[t] ** 2))

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self._vertices, other._vertices)
            and len(self._cells) == len(other._cells)
            and all(np.array_equal(a, b) for a, b in zip(self._cells, other._cells))
        )

    __hash__ = object.__hash__

    def __repr__(self):
        return (f"Mesh(n_vertices={self.n_vertices}, n_elements={self.n_elements}, "
                f"n_edges={self.n_edges}, h={self.h:.4g})")


def outward_normal(mesh, t, e):
    """Unit outward normal of element ``t`` on its edge ``e``."""
    eids = mesh.element_edges(t)
    hit = np.flatnonzero(eids == e)
    if hit.size == 0:
        raise MeshError(f"edge {e} is not an edge of element {t}")
    return mesh.edge_signs(t)[hit[0]] * mesh.edge_normals[e]


# ---------------------------------------------------------------------------
# generators


def build_uniform_triangular(n):
    """n x n squares on (0,1)^2, each cut along its negative-slope diagonal."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((v00, v10, v01))
            cells.append((v10, v11, v01))
    return Mesh(vertices, cells, h=1.0 / n)


def _root(parent, i):
    while parent[i] != i:
        i = parent[i]
    return i


def _voronoi_cells(seeds, tol=1e-10):
    """Voronoi cells of ``seeds`` clipped to the unit square.

    Mirroring the seeds across the four sides makes the clipped cells
    exactly the bounded Voronoi regions of the original seeds.
    """
    m = len(seeds)
    pts = np.vstack([
        seeds,
        np.column_stack([-seeds[:, 0], seeds[:, 1]]),
        np.column_stack([2.0 - seeds[:, 0], seeds[:, 1]]),
        np.column_stack([seeds[:, 0], -seeds[:, 1]]),
        np.column_stack([seeds[:, 0], 2.0 - seeds[:, 1]]),
    ])
    vor = Voronoi(pts)
    verts = vor.vertices.copy()
    verts[np.abs(verts) < tol] = 0.0
    verts[np.abs(verts - 1.0) < tol] = 1.0

    # merge Voronoi vertices closer than tol (degenerate >3-cell corners)
    parent = np.arange(len(verts))
    for i, j in sorted(cKDTree(verts).query_pairs(tol)):
        ri, rj = parent[i], parent[j]
        while parent[ri] != ri:
            ri = parent[ri]
        while parent[rj] != rj:
            rj = parent[rj]
        parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([_root(parent, i) for i in range(len(verts))])
    first, inverse = np.unique(roots, return_inverse=True)
    merged = verts[first]

    loops = []
    for i in range(m):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) == 0:
            raise DegenerateCellError(f"seed {i} has an unbounded cell")
        loop = [int(inverse[v]) for v in region]
        dedup = [v for j, v in enumerate(loop) if v != loop[j - 1]]
        xy = merged[dedup]
        c = xy.mean(axis=0)
        order = np.argsort(np.arctan2(xy[:, 1] - c[1], xy[:, 0] - c[0]))
        loops.append([dedup[j] for j in order])

    used = np.unique(np.concatenate(loops))
    remap = -np.ones(len(merged), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return merged[used], [remap[np.array(lp)] for lp in loops]


def _boundary_rank(p, tol=1e-14):
    on_x = abs(p[0]) < tol or abs(p[0] - 1.0) < tol
    on_y = abs(p[1]) < tol or abs(p[1] - 1.0) < tol
    return 2 if on_x and on_y else int(on_x or on_y)


def _convex_loop(xy, tol=1e-12):
    d = np.roll(xy, -1, axis=0) - xy
    cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
    return bool(np.all(cross > -tol * np.max(np.abs(d)) ** 2))


def _collapse_short_edges(verts, loops, ratio, max_passes=20):
    """Merge the endpoints of edges shorter than ``ratio`` times the smaller
    adjacent cell diameter.

    Corners and boundary vertices keep their position so the square is
    preserved.  A merge is skipped if it would leave a cell with fewer than
    three vertices or make a cell non-convex.
    """
    verts = verts.copy()
    loops = [list(lp) for lp in loops]
    for _ in range(max_passes):
        diam = [_diameter(verts[lp]) for lp in loops]
        owners, cells_of = {}, {}
        for c, lp in enumerate(loops):
            for a, b in zip(lp, lp[1:] + lp[:1]):
                owners.setdefault((min(a, b), max(a, b)), []).append(c)
                cells_of.setdefault(a, set()).add(c)
        short = []
        for (a, b), cs in owners.items():
            length = float(np.hypot(*(verts[a] - verts[b])))
            if length < ratio * min(diam[c] for c in cs):
                short.append((length, a, b, cs))
        merged = False
        touched = set()
        for _, a, b, cs in sorted(short):
            if a in touched or b in touched or any(len(loops[c]) <= 3 for c in cs):
                continue
            ra, rb = _boundary_rank(verts[a]), _boundary_rank(verts[b])
            if ra == rb == 1:
                pos = 0.5 * (verts[a] + verts[b])
                if _boundary_rank(pos) != 1:
                    continue  # endpoints on different sides near a corner
            elif rb > ra:
                pos = verts[b]
            elif ra > rb:
                pos = verts[a]
            elif ra == 0:
                pos = 0.5 * (verts[a] + verts[b])
            else:
                continue
            affected = cells_of[a] | cells_of[b]
            trial = {}
            for c in affected:
                lp = [a if v == b else v for v in loops[c]]
                lp = [v for j, v in enumerate(lp) if v != lp[j - 1]]
                xy = verts[lp].copy()
                xy[lp.index(a)] = pos
                if len(lp) < 3 or not _convex_loop(xy) or _signed_area(xy) <= 0.0:
                    break
                trial[c] = lp
            else:
                verts[a] = pos
                for c, lp in trial.items():
                    loops[c] = lp
                touched.update((a, b))
                merged = True
        if not merged:
            break
    used = np.unique(np.concatenate(loops))
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return verts[used], [remap[np.array(lp)] for lp in loops]


def build_polygonal(seed_count, lloyd_iters=0, rng_seed=0, seeds=None, min_edge_ratio=0.05):
    """Clipped Voronoi mesh of (0,1)^2 with optional Lloyd relaxation.

    ``seeds`` overrides the random seeding with explicit generator points.
    Voronoi diagrams of random points contain arbitrarily short edges, which
    wreck the conditioning of the ``h_e**-3`` stabilizer; edges shorter than
    ``min_edge_ratio`` times the adjacent cell diameter are collapsed
    (``min_edge_ratio=0`` keeps the exact Voronoi cells).
    """
    if seeds is None:
        seed_count = int(seed_count)
        if seed_count < 1:
            raise ValueError("seed_count must be positive")
        rng = np.random.default_rng(rng_seed)
        seeds = rng.uniform(0.0, 1.0, size=(seed_count, 2))
    seeds = np.array(seeds, dtype=float).reshape(-1, 2)
    if np.any(seeds <= 0.0) or np.any(seeds >= 1.0):
        raise ValueError("seeds must lie strictly inside the unit square")

    for _ in range(int(lloyd_iters) + 1):
        verts, loops = _voronoi_cells(seeds)
        areas = np.array([_signed_area(verts[lp]) for lp in loops])
        if np.any(areas < 1e-12):
            bad = int(np.argmin(areas))
            raise DegenerateCellError(f"cell {bad} has area {areas[bad]:.3e} < 1e-12")
        seeds = np.array([_polygon_centroid(verts[lp]) for lp in loops])
    # the last pass rebuilds from the relaxed seeds; discard its centroid update
    if min_edge_ratio > 0:
        verts, loops = _collapse_short_edges(verts, loops, float(min_edge_ratio))
    return Mesh(verts, loops)


# ---------------------------------------------------------------------------
# text format


def save_mesh(mesh, path):
    lines = [f"polymesh 2 {mesh.n_vertices} {mesh.n_elements}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(map(str, [len(c), *c.tolist()])) for c in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path):
    """Read a mesh written by :func:`save_mesh` (``#`` starts a comment)."""
    records = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            records.append((lineno, text.split()))
    if not records:
        raise MeshParseError("empty mesh file", line=1)

    lineno, head = records[0]
    if len(head) != 4 or head[0] != "polymesh":
        raise MeshParseError("expected 'polymesh 2 <n_vertices> <n_elements>'", line=lineno)
    if head[1] != "2":
        raise MeshParseError(f"unsupported dimension {head[1]}", line=lineno)
    try:
        nv, nt = int(head[2]), int(head[3])
    except ValueError:
        raise MeshParseError("counts must be integers", line=lineno) from None
    if len(records) != 1 + nv + nt:
        last = records[-1][0]
        raise MeshParseError(
            f"expected {nv} vertex and {nt} element lines, found {len(records) - 1} records",
            line=last)

    vertices = np.empty((nv, 2))
    for i, (lineno, tok) in enumerate(records[1:1 + nv]):
        if len(tok) != 2:
            raise MeshParseError("vertex line needs exactly 2 coordinates", line=lineno)
        try:
            vertices[i] = [float(tok[0]), float(tok[1])]
        except ValueError:
            raise MeshParseError("bad coordinate", line=lineno) from None

    cells = []
    for lineno, tok in records[1 + nv:]:
        try:
            vals = [int(s) for s in tok]
        except ValueError:
            raise MeshParseError("element line must contain integers", line=lineno) from None
        if vals[0] != len(vals) - 1 or vals[0] < 3:
            raise MeshParseError("element vertex count does not match", line=lineno)
        if min(vals[1:]) < 0 or max(vals[1:]) >= nv:
            raise MeshParseError("vertex id out of range", line=lineno)
        cells.append(vals[1:])
    return Mesh(vertices, cells)


# ---------------------------------------------------------------------------
# shape regularity


@dataclass(frozen=True)
class RegularityReport:
    rho_v: float
    rho_e: float
    kappa: float
    sigma_star: float
    pyramid_ok: np.ndarray
    min_area: float

    def as_dict(self):
        return {
            "rho_v": self.rho_v,
            "rho_e": self.rho_e,
            "kappa": self.kappa,
            "sigma_star": self.sigma_star,
            "pyramid_ok": bool(np.all(self.pyramid_ok)),
            "min_area": self.min_area,
        }


def _segments_cross(p, q, a, b, eps):
    def orient(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])

    d1, d2 = orient(a, b, p), orient(a, b, q)
    d3, d4 = orient(p, q, a), orient(p, q, b)
    return (d1 * d2 < -eps) and (d3 * d4 < -eps)


def _point_in_polygon(pt, xy):
    inside = False
    x, y = pt
    for (x0, y0), (x1, y1) in zip(xy, np.roll(xy, -1, axis=0)):
        if (y0 > y) != (y1 > y):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xc > x:
                inside = not inside
    return inside


def _apex_candidates(xy, centroid):
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    s = (np.arange(5) + 0.5) / 5.0
    gx, gy = np.meshgrid(lo[0] + s * (hi[0] - lo[0]), lo[1] + s * (hi[1] - lo[1]))
    cand = np.vstack([centroid, np.column_stack([gx.ravel(), gy.ravel()])])
    return np.array([p for p in cand if _point_in_polygon(p, xy)])


def check_shape_regularity(mesh, sigma_star=0.05):
    """Audit the mesh against the volume, edge-ratio and inscribed-triangle conditions.

    The inscribed-triangle height is maximised over apex candidates from a
    5x5 grid on each element's bounding box (plus its centroid), so it is a
    lower bound of the true optimum.
    """
    hT = mesh.diameters
    rho_v = float(np.min(mesh.areas / hT**2))
    kappa = np.inf
    worst_height = np.inf
    ok = np.zeros(mesh.n_elements, dtype=bool)
    for t in range(mesh.n_elements):
        xy = mesh.element_vertices(t)
        convex = mesh.is_convex(t)
        apexes = _apex_candidates(xy, mesh.centroids[t])
        eps = 1e-14 * hT[t] ** 2
        elem_worst = np.inf
        for j, e in enumerate(mesh.element_edges(t)):
            kappa = min(kappa, mesh.edge_lengths[e] / hT[t])
            a, b = xy[j], xy[(j + 1) % len(xy)]
            nrm = mesh.edge_signs(t)[j] * mesh.edge_normals[e]
            best = 0.0
            for p in apexes:
                height = float((a - p) @ nrm)
                if height <= best:
                    continue
                if not convex:
                    sides = zip(xy, np.roll(xy, -1, axis=0))
                    if any(_segments_cross(p, a, u, v, eps) or _segments_cross(p, b, u, v, eps)
                           for u, v in sides):
                        continue
                best = height
            elem_worst = min(elem_worst, best / hT[t])
        ok[t] = elem_worst >= sigma_star
        worst_height = min(worst_height, elem_worst)
    ok.setflags(write=False)
    return RegularityReport(rho_v=rho_v, rho_e=1.0, kappa=float(kappa),
                            sigma_star=float(worst_height), pyramid_ok=ok,
                            min_area=float(mesh.areas.min()))
