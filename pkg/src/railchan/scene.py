"""Static environment model: extruded buildings, cylindrical scatterers, ground.

The scene is loaded once from a JSON description and is immutable afterwards;
every query here is a pure function of the scene, so tracers may share one
instance across workers freely.

Geometry conventions
--------------------
* Coordinates are meters, z up.  The ground is the infinite plane ``z = 0``.
* Building footprints are simple polygons stored counterclockwise; each
  footprint edge extrudes to a vertical rectangular facade, the top face is a
  horizontal rooftop polygon, and each footprint vertex owns a vertical edge.
* Stable element ids inside one building with ``V`` footprint vertices:
  facade ``i`` (from vertex ``i`` to ``i+1``) has element id ``i``, the
  rooftop has element id ``V``, and the vertical edge at vertex ``i`` has
  element id ``V + 1 + i``.
* The ground is addressed as object id ``-1``, element id ``0``.

Intersection queries exclude a tolerance band ``EPS_GEOM`` around segment
endpoints so that a path vertex lying exactly on a surface does not occlude
its own segments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

#: Endpoint-exclusion / coincidence tolerance in meters.  Scenes are at most a
#: few km across, which leaves ~9 significant digits of double headroom.
EPS_GEOM = 1e-6

#: Default building material (concrete-class dielectric).
DEFAULT_EPS_R = 5.0
DEFAULT_SIGMA = 0.1

GROUND_OBJECT_ID = -1


class SceneError(ValueError):
    """Raised when a scene description is malformed."""


@dataclass(frozen=True)
class Material:
    """Homogeneous surface material.

    ``eps_r`` is the real relative permittivity (>= 1), ``sigma`` the
    conductivity in S/m.  ``pec`` short-circuits both: a perfect conductor
    reflects with magnitude one for both polarizations at every angle.
    """

    eps_r: float = DEFAULT_EPS_R
    sigma: float = DEFAULT_SIGMA
    pec: bool = False

    def __post_init__(self):
        if not self.pec:
            if self.eps_r < 1.0:
                raise SceneError(f"relative permittivity must be >= 1, got {self.eps_r}")
            if self.sigma < 0.0:
                raise SceneError(f"conductivity must be >= 0, got {self.sigma}")


PEC = Material(eps_r=1.0, sigma=0.0, pec=True)
DEFAULT_MATERIAL = Material()


@dataclass
class Building:
    """Extruded polygon with a uniform material.

    ``footprint`` is an (V, 2) float array, counterclockwise, simple.
    """

    id: int
    footprint: np.ndarray
    height: float
    material: Material = DEFAULT_MATERIAL

    @property
    def n_vertices(self) -> int:
        return len(self.footprint)

    @property
    def roof_element_id(self) -> int:
        return self.n_vertices

    def edge_element_id(self, vertex_index: int) -> int:
        return self.n_vertices + 1 + vertex_index


@dataclass
class CylinderScatterer:
    """Vertical cylinder (catenary-pylon style discrete scatterer)."""

    id: int
    base_center: np.ndarray
    radius: float
    height: float
    material: Material = PEC

    @property
    def reference_point(self) -> np.ndarray:
        """Axis point at mid-height; anchor for scatter-path geometry."""
        return self.base_center + np.array([0.0, 0.0, 0.5 * self.height])


@dataclass(frozen=True)
class Hit:
    """First intersection of a segment with scene geometry."""

    point: np.ndarray
    object_id: int
    element_id: int
    kind: str  # "facade" | "roof" | "ground"
    distance: float
    t: float


@dataclass(frozen=True)
class Wedge:
    """Local frame of a vertical building edge, for diffraction coefficients.

    Angles around the edge are measured from ``o_tangent`` rotating through
    ``o_normal``; the n-face tangent then sits at ``n_index * pi``.  The
    o-face is the adjacent facade with the lower element id.
    """

    point_xy: np.ndarray
    height: float
    edge_dir: np.ndarray  # unit, +z
    o_tangent: np.ndarray  # unit, horizontal, into the o-face
    o_normal: np.ndarray
    n_tangent: np.ndarray
    n_normal: np.ndarray
    n_index: float  # exterior angle / pi
    o_material: Material
    n_material: Material
    object_id: int
    element_id: int


def _polygon_signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    """True when open segments (p1,p2) and (q1,q2) cross."""
    d1 = _cross2(q2 - q1, p1 - q1)
    d2 = _cross2(q2 - q1, p2 - q1)
    d3 = _cross2(p2 - p1, q1 - p1)
    d4 = _cross2(p2 - p1, q2 - p1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _check_simple_polygon(poly: np.ndarray, where: str) -> None:
    n = len(poly)
    if n < 3:
        raise SceneError(f"{where}: footprint needs at least 3 vertices, got {n}")
    if abs(_polygon_signed_area(poly)) < EPS_GEOM**2:
        raise SceneError(f"{where}: footprint is degenerate (zero area)")
    for i in range(n):
        if np.linalg.norm(poly[(i + 1) % n] - poly[i]) < EPS_GEOM:
            raise SceneError(f"{where}: repeated vertex at index {i}")
    for i in range(n):
        for j in range(i + 1, n):
            # skip adjacent edges (they share an endpoint by construction)
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_properly_intersect(
                poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]
            ):
                raise SceneError(f"{where}: footprint self-intersects (edges {i} and {j})")


def _point_in_polygon(point_xy: np.ndarray, poly: np.ndarray) -> bool:
    """Even-odd rule; points on the boundary count as inside."""
    x, y = point_xy
    xs, ys = poly[:, 0], poly[:, 1]
    xe, ye = np.roll(xs, -1), np.roll(ys, -1)
    crosses = ((ys > y) != (ye > y)) & (
        x < xs + (y - ys) * (xe - xs) / np.where(ye != ys, ye - ys, 1.0)
    )
    inside = bool(np.count_nonzero(crosses) % 2)
    if inside:
        return True
    # boundary tolerance
    dx, dy = xe - xs, ye - ys
    seg_len2 = dx * dx + dy * dy
    tproj = np.clip(((x - xs) * dx + (y - ys) * dy) / np.where(seg_len2 > 0, seg_len2, 1.0), 0, 1)
    d2 = (xs + tproj * dx - x) ** 2 + (ys + tproj * dy - y) ** 2
    return bool(np.any(d2 <= EPS_GEOM**2))


def _points_in_polygon(points_xy: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Vectorized even-odd test for an (N, 2) array of points."""
    x = points_xy[:, 0][:, None]
    y = points_xy[:, 1][:, None]
    xs, ys = poly[:, 0][None, :], poly[:, 1][None, :]
    xe, ye = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    denom = np.where(ye != ys, ye - ys, 1.0)
    crosses = ((ys > y) != (ye > y)) & (x < xs + (y - ys) * (xe - xs) / denom)
    return (np.count_nonzero(crosses, axis=1) % 2).astype(bool)


class _Grid:
    """Uniform 2D grid over building footprints.

    Cells map to the ids of buildings whose (eps-padded) footprint bounding
    box overlaps the cell.  A segment query walks the cells crossed by the 2D
    projection of the segment and returns the union of their building sets,
    which is guaranteed to be a superset of every building the segment can
    touch.
    """

    def __init__(self, buildings: list[Building], cell_size: float = 25.0):
        self.cell_size = float(cell_size)
        self.n_buildings = len(buildings)
        if not buildings:
            self.origin = np.zeros(2)
            self.shape = (0, 0)
            self.cells: dict[tuple[int, int], np.ndarray] = {}
            return
        lo = np.min([b.footprint.min(axis=0) for b in buildings], axis=0) - 1.0
        hi = np.max([b.footprint.max(axis=0) for b in buildings], axis=0) + 1.0
        self.origin = lo
        nx = max(1, int(math.ceil((hi[0] - lo[0]) / self.cell_size)))
        ny = max(1, int(math.ceil((hi[1] - lo[1]) / self.cell_size)))
        self.shape = (nx, ny)
        cells: dict[tuple[int, int], list[int]] = {}
        for idx, b in enumerate(buildings):
            bmin = b.footprint.min(axis=0) - EPS_GEOM
            bmax = b.footprint.max(axis=0) + EPS_GEOM
            i0, j0 = self._cell_of(bmin)
            i1, j1 = self._cell_of(bmax)
            for i in range(max(i0, 0), min(i1, nx - 1) + 1):
                for j in range(max(j0, 0), min(j1, ny - 1) + 1):
                    cells.setdefault((i, j), []).append(idx)
        self.cells = {k: np.array(v, dtype=np.intp) for k, v in cells.items()}

    def _cell_of(self, p_xy) -> tuple[int, int]:
        return (
            int(math.floor((p_xy[0] - self.origin[0]) / self.cell_size)),
            int(math.floor((p_xy[1] - self.origin[1]) / self.cell_size)),
        )

    def candidates(self, p_xy: np.ndarray, q_xy: np.ndarray) -> np.ndarray:
        """Building indices possibly intersected by segment p->q (2D)."""
        if not self.cells:
            return np.empty(0, dtype=np.intp)
        nx, ny = self.shape
        # clip the segment against the grid bounds (Liang-Barsky)
        d = q_xy - p_xy
        t0, t1 = 0.0, 1.0
        lo = self.origin
        hi = self.origin + np.array([nx, ny]) * self.cell_size
        for axis in range(2):
            if abs(d[axis]) < 1e-15:
                if p_xy[axis] < lo[axis] or p_xy[axis] > hi[axis]:
                    return np.empty(0, dtype=np.intp)
            else:
                ta = (lo[axis] - p_xy[axis]) / d[axis]
                tb = (hi[axis] - p_xy[axis]) / d[axis]
                if ta > tb:
                    ta, tb = tb, ta
                t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return np.empty(0, dtype=np.intp)
        a = p_xy + t0 * d
        b = p_xy + t1 * d
        mask = np.zeros(self.n_buildings, dtype=bool)
        for cell in self._walk_cells(a, b):
            ids = self.cells.get(cell)
            if ids is not None:
                mask[ids] = True
        return np.nonzero(mask)[0]

    def _walk_cells(self, a: np.ndarray, b: np.ndarray):
        """Amanatides-Woo traversal; ties step both neighbours."""
        nx, ny = self.shape
        i, j = self._cell_of(a)
        i = min(max(i, 0), nx - 1)
        j = min(max(j, 0), ny - 1)
        i_end, j_end = self._cell_of(b)
        i_end = min(max(i_end, 0), nx - 1)
        j_end = min(max(j_end, 0), ny - 1)
        yield (i, j)
        d = b - a
        if abs(d[0]) < 1e-15 and abs(d[1]) < 1e-15:
            return
        step_i = 1 if d[0] > 0 else -1
        step_j = 1 if d[1] > 0 else -1
        if abs(d[0]) > 1e-15:
            next_x = self.origin[0] + (i + (step_i > 0)) * self.cell_size
            t_max_x = (next_x - a[0]) / d[0]
            t_dx = self.cell_size / abs(d[0])
        else:
            t_max_x, t_dx = math.inf, math.inf
        if abs(d[1]) > 1e-15:
            next_y = self.origin[1] + (j + (step_j > 0)) * self.cell_size
            t_max_y = (next_y - a[1]) / d[1]
            t_dy = self.cell_size / abs(d[1])
        else:
            t_max_y, t_dy = math.inf, math.inf
        guard = 4 * (nx + ny) + 8
        while (i, j) != (i_end, j_end) and guard > 0:
            guard -= 1
            if abs(t_max_x - t_max_y) < 1e-12:
                # corner crossing: cover both 4-neighbours
                if 0 <= i + step_i < nx:
                    yield (i + step_i, j)
                if 0 <= j + step_j < ny:
                    yield (i, j + step_j)
                i += step_i
                j += step_j
                t_max_x += t_dx
                t_max_y += t_dy
            elif t_max_x < t_max_y:
                i += step_i
                t_max_x += t_dx
            else:
                j += step_j
                t_max_y += t_dy
            if not (0 <= i < nx and 0 <= j < ny):
                return
            yield (i, j)


@dataclass
class Scene:
    """Immutable environment: buildings, scatterers, ground, spatial index."""

    buildings: list[Building]
    scatterers: list[CylinderScatterer] = field(default_factory=list)
    ground_material: Material = DEFAULT_MATERIAL
    grid_cell_size: float = 25.0

    def __post_init__(self):
        ids = [b.id for b in self.buildings]
        if len(set(ids)) != len(ids):
            raise SceneError("duplicate building ids")
        sids = [s.id for s in self.scatterers]
        if len(set(sids)) != len(sids):
            raise SceneError("duplicate scatterer ids")
        self._build_arrays()
        self._grid = _Grid(self.buildings, self.grid_cell_size)

    # ------------------------------------------------------------------
    # precomputed flat geometry arrays
    # ------------------------------------------------------------------
    def _build_arrays(self):
        origins, dirs, lengths, heights, normals, offsets = [], [], [], [], [], []
        fac_building, fac_object, fac_element = [], [], []
        self._edges: dict[tuple[int, int], Wedge] = {}
        self._facade_info: dict[tuple[int, int], int] = {}
        for bi, b in enumerate(self.buildings):
            poly = b.footprint
            nv = len(poly)
            for i in range(nv):
                v0, v1 = poly[i], poly[(i + 1) % nv]
                edge = v1 - v0
                length = float(np.linalg.norm(edge))
                u = edge / length
                origins.append([v0[0], v0[1], 0.0])
                dirs.append([u[0], u[1], 0.0])
                lengths.append(length)
                heights.append(b.height)
                n = np.array([u[1], -u[0], 0.0])  # outward for CCW footprints
                normals.append(n)
                offsets.append(n[0] * v0[0] + n[1] * v0[1])
                fac_building.append(bi)
                fac_object.append(b.id)
                fac_element.append(i)
                self._facade_info[(b.id, i)] = len(origins) - 1
            self._build_edges(b)
        if origins:
            self.fac_origin = np.array(origins)
            self.fac_dir = np.array(dirs)
            self.fac_len = np.array(lengths)
            self.fac_height = np.array(heights)
            self.fac_normal = np.array(normals)
            self.fac_offset = np.array(offsets)
            self.fac_building = np.array(fac_building, dtype=np.intp)
            self.fac_object = np.array(fac_object, dtype=np.intp)
            self.fac_element = np.array(fac_element, dtype=np.intp)
        else:
            self.fac_origin = np.zeros((0, 3))
            self.fac_dir = np.zeros((0, 3))
            self.fac_len = np.zeros(0)
            self.fac_height = np.zeros(0)
            self.fac_normal = np.zeros((0, 3))
            self.fac_offset = np.zeros(0)
            self.fac_building = np.zeros(0, dtype=np.intp)
            self.fac_object = np.zeros(0, dtype=np.intp)
            self.fac_element = np.zeros(0, dtype=np.intp)
        self.n_facades = len(self.fac_len)
        self.fac_od = np.einsum("ij,ij->i", self.fac_origin, self.fac_dir)
        # flat footprint-edge table + per-building extents for batched
        # point-in-building queries
        ex0, ey0, ex1, ey1, ebi = [], [], [], [], []
        heights, xmin, xmax, ymin, ymax = [], [], [], [], []
        for bi, b in enumerate(self.buildings):
            poly = b.footprint
            nv = len(poly)
            for i in range(nv):
                v0, v1 = poly[i], poly[(i + 1) % nv]
                ex0.append(v0[0]); ey0.append(v0[1])
                ex1.append(v1[0]); ey1.append(v1[1])
                ebi.append(bi)
            heights.append(b.height)
            xmin.append(poly[:, 0].min()); xmax.append(poly[:, 0].max())
            ymin.append(poly[:, 1].min()); ymax.append(poly[:, 1].max())
        self._edge_x0 = np.array(ex0); self._edge_y0 = np.array(ey0)
        self._edge_x1 = np.array(ex1); self._edge_y1 = np.array(ey1)
        self._edge_bidx = np.array(ebi, dtype=np.intp)
        self._bldg_height = np.array(heights)
        self._bldg_xmin = np.array(xmin); self._bldg_xmax = np.array(xmax)
        self._bldg_ymin = np.array(ymin); self._bldg_ymax = np.array(ymax)
        # facades are appended building by building, so each building owns the
        # contiguous facade range [start[b], start[b+1])
        counts = [len(b.footprint) for b in self.buildings]
        self._bldg_fac_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.intp)

    def _build_edges(self, b: Building):
        poly = b.footprint
        nv = len(poly)
        for i in range(nv):
            prev_v = poly[(i - 1) % nv]
            this_v = poly[i]
            next_v = poly[(i + 1) % nv]
            e_in = this_v - prev_v
            e_out = next_v - this_v
            turn = _cross2(e_in, e_out)
            if turn <= EPS_GEOM:
                continue  # reflex or straight vertex: not a diffracting edge
            cosang = float(
                np.dot(-e_in, e_out) / (np.linalg.norm(e_in) * np.linalg.norm(e_out))
            )
            interior = math.acos(min(1.0, max(-1.0, cosang)))
            n_index = 2.0 - interior / math.pi
            # adjacent facades: facade (i-1) ends here, facade i starts here
            fa_prev = (i - 1) % nv
            fa_next = i
            tang_prev = -(e_in / np.linalg.norm(e_in))
            tang_next = e_out / np.linalg.norm(e_out)
            nrm_prev = np.array([e_in[1], -e_in[0]]) / np.linalg.norm(e_in)
            nrm_next = np.array([e_out[1], -e_out[0]]) / np.linalg.norm(e_out)
            if fa_prev < fa_next:
                o_el, o_t, o_n = fa_prev, tang_prev, nrm_prev
                n_t, n_n = tang_next, nrm_next
            else:
                o_el, o_t, o_n = fa_next, tang_next, nrm_next
                n_t, n_n = tang_prev, nrm_prev
            wedge = Wedge(
                point_xy=this_v.copy(),
                height=b.height,
                edge_dir=np.array([0.0, 0.0, 1.0]),
                o_tangent=np.array([o_t[0], o_t[1], 0.0]),
                o_normal=np.array([o_n[0], o_n[1], 0.0]),
                n_tangent=np.array([n_t[0], n_t[1], 0.0]),
                n_normal=np.array([n_n[0], n_n[1], 0.0]),
                n_index=n_index,
                o_material=b.material,
                n_material=b.material,
                object_id=b.id,
                element_id=b.edge_element_id(i),
            )
            self._edges[(b.id, wedge.element_id)] = wedge

    # ------------------------------------------------------------------
    # lookups
    # ------------------------------------------------------------------
    def facade_frame(self, object_id: int, element_id: int):
        """(origin, dir, length, height, normal, material) for one facade."""
        fi = self._facade_info[(object_id, element_id)]
        bi = self.fac_building[fi]
        return (
            self.fac_origin[fi],
            self.fac_dir[fi],
            float(self.fac_len[fi]),
            float(self.fac_height[fi]),
            self.fac_normal[fi],
            self.buildings[bi].material,
        )

    def wedges(self) -> list[Wedge]:
        return list(self._edges.values())

    def wedge(self, object_id: int, element_id: int) -> Wedge:
        return self._edges[(object_id, element_id)]

    def building_by_id(self, object_id: int) -> Building:
        for b in self.buildings:
            if b.id == object_id:
                return b
        raise KeyError(object_id)

    def contains_point(self, p: np.ndarray) -> bool:
        """True when p is strictly inside some building volume."""
        if not self.buildings:
            return False
        z = float(p[2])
        z_ok = (z > -EPS_GEOM) & (z < self._bldg_height - EPS_GEOM)
        if not np.any(z_ok):
            return False
        x, y = float(p[0]), float(p[1])
        xs, ys = self._edge_x0, self._edge_y0
        xe, ye = self._edge_x1, self._edge_y1
        crosses = ((ys > y) != (ye > y)) & (
            x < xs + (y - ys) * (xe - xs) / np.where(ye != ys, ye - ys, 1.0)
        )
        counts = np.bincount(self._edge_bidx[crosses], minlength=len(self.buildings))
        inside = ((counts % 2) == 1) & z_ok
        if not np.any(inside):
            return False
        # exclude points on (or within tolerance of) a footprint boundary
        emask = inside[self._edge_bidx]
        exs, eys = xs[emask], ys[emask]
        edx, edy = xe[emask] - exs, ye[emask] - eys
        seg_len2 = edx * edx + edy * edy
        tproj = np.clip(
            ((x - exs) * edx + (y - eys) * edy) / np.where(seg_len2 > 0, seg_len2, 1.0), 0, 1
        )
        d2 = (exs + tproj * edx - x) ** 2 + (eys + tproj * edy - y) ** 2
        on_boundary = d2 <= EPS_GEOM**2
        bad = np.zeros(len(self.buildings), dtype=bool)
        bad[self._edge_bidx[emask][on_boundary]] = True
        return bool(np.any(inside & ~bad))

    # ------------------------------------------------------------------
    # intersection queries
    # ------------------------------------------------------------------
    def first_hit(self, p: np.ndarray, q: np.ndarray) -> Hit | None:
        """Nearest scene intersection strictly between the endpoints.

        Hits closer than ``EPS_GEOM`` to either endpoint are ignored, so a
        segment that starts or ends on a surface is not blocked by it.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        cand = self._grid.candidates(p[:2], q[:2])
        return self._first_hit_impl(p, q, cand)

    def brute_first_hit(self, p: np.ndarray, q: np.ndarray) -> Hit | None:
        """Same contract as :meth:`first_hit` but scanning every object."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return self._first_hit_impl(p, q, np.arange(len(self.buildings), dtype=np.intp))

    def _first_hit_impl(self, p, q, building_idx) -> Hit | None:
        seg = q - p
        seg_len = float(np.linalg.norm(seg))
        if seg_len < EPS_GEOM:
            return None
        best: tuple[float, int, int, str, float, np.ndarray] | None = None

        def consider(dist, object_id, element_id, kind, t, point):
            nonlocal best
            key = (dist, 1 if kind == "ground" else 0, object_id, element_id)
            if best is None or key < (best[0], 1 if best[3] == "ground" else 0, best[1], best[2]):
                best = (dist, object_id, element_id, kind, t, point)

        if len(building_idx) and self.n_facades:
            bmask = np.zeros(len(self.buildings), dtype=bool)
            bmask[building_idx] = True
            fmask = bmask[self.fac_building]
            fi = np.nonzero(fmask)[0]
            if len(fi):
                n = self.fac_normal[fi]
                denom = n @ seg
                off = self.fac_offset[fi] - n @ p
                ok = np.abs(denom) > 1e-15
                t = np.where(ok, off / np.where(ok, denom, 1.0), 0.0)
                dist = t * seg_len
                ok &= (dist > EPS_GEOM) & (dist < seg_len - EPS_GEOM)
                if np.any(ok):
                    pts = p[None, :] + t[:, None] * seg[None, :]
                    rel = pts - self.fac_origin[fi]
                    s = np.einsum("ij,ij->i", rel, self.fac_dir[fi])
                    ok &= (s >= -EPS_GEOM) & (s <= self.fac_len[fi] + EPS_GEOM)
                    ok &= (pts[:, 2] >= -EPS_GEOM) & (pts[:, 2] <= self.fac_height[fi] + EPS_GEOM)
                    for k in np.nonzero(ok)[0]:
                        consider(
                            float(dist[k]),
                            int(self.fac_object[fi[k]]),
                            int(self.fac_element[fi[k]]),
                            "facade",
                            float(t[k]),
                            pts[k],
                        )
            # rooftops
            dz = seg[2]
            for bi in building_idx:
                b = self.buildings[bi]
                if abs(dz) < 1e-15:
                    continue
                t = (b.height - p[2]) / dz
                dist = t * seg_len
                if dist <= EPS_GEOM or dist >= seg_len - EPS_GEOM:
                    continue
                pt = p + t * seg
                if _point_in_polygon(pt[:2], b.footprint):
                    consider(float(dist), b.id, b.roof_element_id, "roof", float(t), pt)
        # ground plane z = 0
        if abs(seg[2]) > 1e-15:
            t = -p[2] / seg[2]
            dist = t * seg_len
            if EPS_GEOM < dist < seg_len - EPS_GEOM:
                pt = p + t * seg
                consider(float(dist), GROUND_OBJECT_ID, 0, "ground", float(t), pt)
        if best is None:
            return None
        dist, object_id, element_id, kind, t, point = best
        return Hit(point=point, object_id=object_id, element_id=element_id, kind=kind, distance=dist, t=t)

    def segments_blocked(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Vectorized occlusion test for (K, 3) segment endpoint arrays.

        Brute-force over all facades/rooftops/ground; used by the tracers
        where many candidate segments are tested at once.
        """
        p = np.atleast_2d(np.asarray(p, dtype=float))
        q = np.atleast_2d(np.asarray(q, dtype=float))
        seg = q - p
        seg_len = np.linalg.norm(seg, axis=1)
        blocked = np.zeros(len(p), dtype=bool)
        live = seg_len >= EPS_GEOM
        if self.n_facades:
            # prefilter on (segment bbox) x (building bbox) overlap, then run
            # the exact plane/rectangle test only on surviving pairs
            lo = np.minimum(p, q) - EPS_GEOM
            hi = np.maximum(p, q) + EPS_GEOM
            cand = (
                (lo[:, 0:1] <= self._bldg_xmax[None, :])
                & (hi[:, 0:1] >= self._bldg_xmin[None, :])
                & (lo[:, 1:2] <= self._bldg_ymax[None, :])
                & (hi[:, 1:2] >= self._bldg_ymin[None, :])
                & (lo[:, 2:3] <= self._bldg_height[None, :])
                & (hi[:, 2:3] >= 0.0)
            )  # (K, B)
            ki, bi = np.nonzero(cand)
            if len(ki):
                start = self._bldg_fac_start
                counts = start[bi + 1] - start[bi]
                total = int(counts.sum())
                base = np.repeat(start[bi], counts)
                csum = np.cumsum(counts)
                local = np.arange(total) - np.repeat(csum - counts, counts)
                fi = base + local  # facade index per pair
                kk = np.repeat(ki, counts)  # segment index per pair
                nx = self.fac_normal[fi]
                pp = p[kk]
                ss = seg[kk]
                denom = np.einsum("ij,ij->i", nx, ss)
                off = self.fac_offset[fi] - np.einsum("ij,ij->i", nx, pp)
                safe = np.abs(denom) > 1e-15
                t = np.where(safe, off / np.where(safe, denom, 1.0), 0.0)
                sl = seg_len[kk]
                dist = t * sl
                ok = (dist > EPS_GEOM) & (dist < sl - EPS_GEOM)
                if np.any(ok):
                    dx = self.fac_dir[fi]
                    s = (
                        np.einsum("ij,ij->i", pp, dx)
                        - self.fac_od[fi]
                        + t * np.einsum("ij,ij->i", ss, dx)
                    )
                    ok &= (s >= -EPS_GEOM) & (s <= self.fac_len[fi] + EPS_GEOM)
                    z = pp[:, 2] + t * ss[:, 2]
                    ok &= (z >= -EPS_GEOM) & (z <= self.fac_height[fi] + EPS_GEOM)
                    blocked[kk[ok]] = True
                # rooftop crossings for the same (segment, building) pairs
                pb = p[ki]
                sb = seg[ki]
                dz = sb[:, 2]
                safe = np.abs(dz) > 1e-15
                hb = self._bldg_height[bi]
                t = np.where(safe, (hb - pb[:, 2]) / np.where(safe, dz, 1.0), 0.0)
                sl = seg_len[ki]
                dist = t * sl
                okb = (dist > EPS_GEOM) & (dist < sl - EPS_GEOM)
                if np.any(okb):
                    x = pb[:, 0] + t * sb[:, 0]
                    y = pb[:, 1] + t * sb[:, 1]
                    okb &= (x >= self._bldg_xmin[bi]) & (x <= self._bldg_xmax[bi])
                    okb &= (y >= self._bldg_ymin[bi]) & (y <= self._bldg_ymax[bi])
                    rows = np.nonzero(okb)[0]
                    for b_i in np.unique(bi[rows]):
                        sel = rows[bi[rows] == b_i]
                        pts = np.column_stack([x[sel], y[sel]])
                        inside = _points_in_polygon(pts, self.buildings[b_i].footprint)
                        blocked[ki[sel[inside]]] = True
        dz = seg[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(dz) > 1e-15, -p[:, 2] / dz, 0.0)
        dist = t * seg_len
        blocked |= (dist > EPS_GEOM) & (dist < seg_len - EPS_GEOM)
        blocked &= live
        return blocked


def _on_polygon_boundary(point_xy: np.ndarray, poly: np.ndarray) -> bool:
    x, y = point_xy
    xs, ys = poly[:, 0], poly[:, 1]
    xe, ye = np.roll(xs, -1), np.roll(ys, -1)
    dx, dy = xe - xs, ye - ys
    seg_len2 = dx * dx + dy * dy
    tproj = np.clip(((x - xs) * dx + (y - ys) * dy) / np.where(seg_len2 > 0, seg_len2, 1.0), 0, 1)
    d2 = (xs + tproj * dx - x) ** 2 + (ys + tproj * dy - y) ** 2
    return bool(np.any(d2 <= EPS_GEOM**2))


def first_hit(scene: Scene, p, q) -> Hit | None:
    return scene.first_hit(np.asarray(p, float), np.asarray(q, float))


def is_los(scene: Scene, p, q) -> bool:
    """True when the open segment p->q meets no facade, rooftop, or ground."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if np.linalg.norm(q - p) < EPS_GEOM:
        raise ValueError("is_los needs two distinct points")
    return scene.first_hit(p, q) is None


# ----------------------------------------------------------------------
# scene file ingestion
# ----------------------------------------------------------------------

SCENE_SCHEMA_VERSION = 1

_ALLOWED_TOP_KEYS = {"version", "materials", "ground_material", "buildings", "scatterers", "grid_cell_size"}
_ALLOWED_MATERIAL_KEYS = {"eps_r", "sigma", "pec"}
_ALLOWED_BUILDING_KEYS = {"id", "footprint", "height", "material"}
_ALLOWED_SCATTERER_KEYS = {"id", "base", "radius", "height", "material"}


def _parse_material(obj, where: str) -> Material:
    if not isinstance(obj, dict):
        raise SceneError(f"{where}: material must be an object")
    unknown = set(obj) - _ALLOWED_MATERIAL_KEYS
    if unknown:
        raise SceneError(f"{where}: unknown material keys {sorted(unknown)}")
    if obj.get("pec", False):
        return Material(eps_r=1.0, sigma=0.0, pec=True)
    return Material(eps_r=float(obj.get("eps_r", DEFAULT_EPS_R)), sigma=float(obj.get("sigma", DEFAULT_SIGMA)))


def _resolve_material(ref, materials: dict[str, Material], where: str) -> Material:
    if isinstance(ref, str):
        if ref not in materials:
            raise SceneError(f"{where}: unknown material name {ref!r}")
        return materials[ref]
    return _parse_material(ref, where)


def load_scene(text: str) -> Scene:
    """Parse a JSON scene description into a :class:`Scene`.

    The schema (all lengths in meters, conductivity in S/m)::

        {
          "version": 1,
          "materials": {"concrete": {"eps_r": 5.0, "sigma": 0.1},
                        "metal": {"pec": true}},
          "ground_material": "concrete",
          "buildings": [{"id": 1,
                         "footprint": [[x, y], ...],
                         "height": 20.0,
                         "material": "concrete"}],
          "scatterers": [{"id": 1, "base": [x, y, z],
                          "radius": 0.375, "height": 8.2,
                          "material": "metal"}]
        }

    Footprints must be simple polygons with >= 3 vertices; clockwise input is
    normalized to counterclockwise on load.  Unknown keys are rejected.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"scene file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SceneError("scene file must contain a JSON object")
    if "version" not in data:
        raise SceneError("scene file is missing the mandatory 'version' field")
    if data["version"] != SCENE_SCHEMA_VERSION:
        raise SceneError(f"unsupported scene schema version {data['version']!r}")
    unknown = set(data) - _ALLOWED_TOP_KEYS
    if unknown:
        raise SceneError(f"unknown top-level scene keys {sorted(unknown)}")

    materials = {name: _parse_material(m, f"materials[{name!r}]") for name, m in data.get("materials", {}).items()}
    ground = data.get("ground_material")
    ground_material = (
        _resolve_material(ground, materials, "ground_material") if ground is not None else DEFAULT_MATERIAL
    )

    buildings = []
    for i, bobj in enumerate(data.get("buildings", [])):
        where = f"buildings[{i}]"
        if not isinstance(bobj, dict):
            raise SceneError(f"{where}: must be an object")
        unknown = set(bobj) - _ALLOWED_BUILDING_KEYS
        if unknown:
            raise SceneError(f"{where}: unknown keys {sorted(unknown)}")
        for req in ("id", "footprint", "height"):
            if req not in bobj:
                raise SceneError(f"{where}: missing required key {req!r}")
        poly = np.asarray(bobj["footprint"], dtype=float)
        if poly.ndim != 2 or poly.shape[1] != 2:
            raise SceneError(f"{where}: footprint must be a list of [x, y] pairs")
        _check_simple_polygon(poly, where)
        if _polygon_signed_area(poly) < 0:
            poly = poly[::-1].copy()  # normalize clockwise input
        height = float(bobj["height"])
        if height <= 0:
            raise SceneError(f"{where}: height must be positive, got {height}")
        mat = (
            _resolve_material(bobj["material"], materials, where)
            if "material" in bobj
            else DEFAULT_MATERIAL
        )
        buildings.append(Building(id=int(bobj["id"]), footprint=poly, height=height, material=mat))

    scatterers = []
    for i, sobj in enumerate(data.get("scatterers", [])):
        where = f"scatterers[{i}]"
        if not isinstance(sobj, dict):
            raise SceneError(f"{where}: must be an object")
        unknown = set(sobj) - _ALLOWED_SCATTERER_KEYS
        if unknown:
            raise SceneError(f"{where}: unknown keys {sorted(unknown)}")
        for req in ("id", "base", "radius", "height"):
            if req not in sobj:
                raise SceneError(f"{where}: missing required key {req!r}")
        radius = float(sobj["radius"])
        height = float(sobj["height"])
        if radius <= 0:
            raise SceneError(f"{where}: radius must be positive, got {radius}")
        if height <= 0:
            raise SceneError(f"{where}: height must be positive, got {height}")
        mat = _resolve_material(sobj["material"], materials, where) if "material" in sobj else PEC
        scatterers.append(
            CylinderScatterer(
                id=int(sobj["id"]),
                base_center=np.asarray(sobj["base"], dtype=float),
                radius=radius,
                height=height,
                material=mat,
            )
        )

    kwargs = {}
    if "grid_cell_size" in data:
        kwargs["grid_cell_size"] = float(data["grid_cell_size"])
    return Scene(buildings=buildings, scatterers=scatterers, ground_material=ground_material, **kwargs)


def load_scene_file(path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scene(fh.read())
