"""Facet-summation scattering from discrete cylinders.

Cylindrical scatterers are meshed into half-wavelength tangent-plane facets.
Each illuminated-and-visible facet contributes a coherent term built from the
analytic bistatic radar cross-section of a PEC rectangular plate, with
per-facet spherical spreading and phase so that no far-field assumption is
made at the whole-body level.  Incident and scattered legs may include one
specular facade reflection each; the reflected leg is handled with the exact
mirror image of the antenna for per-facet distances plus a constant
polarization/Fresnel operator evaluated on the reference geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .em import (
    AntennaConfig,
    C0,
    CarrierConfig,
    leg_polarization_operator,
)
from .rays import Interaction, RayPath, SCATTERING, TAG_SCATTER, path_angles
from .scene import EPS_GEOM, CylinderScatterer, Scene
from .specular import _facade_crossing

_OMNI = AntennaConfig()
_J_FLIP = np.diag([1.0, -1.0]).astype(complex)

LEG_POLICIES = ("direct-only", "direct+1-reflection")


# ----------------------------------------------------------------------
# meshes
# ----------------------------------------------------------------------
@dataclass
class FacetMesh:
    """Flat-facet tiling of a scattering surface (struct-of-arrays)."""

    centers: np.ndarray  # (N, 3)
    normals: np.ndarray  # (N, 3) unit, outward
    tan_u: np.ndarray  # (N, 3) unit, along facet width
    tan_v: np.ndarray  # (N, 3) unit, along facet height
    width: np.ndarray  # (N,)
    height: np.ndarray  # (N,)
    area: np.ndarray  # (N,)
    reference_point: np.ndarray
    scatterer: CylinderScatterer | None = None


def mesh_cylinder(cyl: CylinderScatterer, carrier: CarrierConfig) -> FacetMesh:
    """Tile the lateral cylinder surface with at-most-half-wavelength facets.

    Facet width is the true arc length, so the mesh area equals the lateral
    surface area exactly; normals are radial, tangents azimuthal/vertical.
    """
    if cyl.radius <= 0 or cyl.height <= 0:
        raise ValueError("cylinder radius and height must be positive")
    target = carrier.wavelength / 2.0
    n_phi = max(3, math.ceil(2.0 * math.pi * cyl.radius / target))
    n_z = max(1, math.ceil(cyl.height / target))
    dphi = 2.0 * math.pi / n_phi
    dz = cyl.height / n_z

    phi = (np.arange(n_phi) + 0.5) * dphi
    z = (np.arange(n_z) + 0.5) * dz
    cphi, sphi = np.cos(phi), np.sin(phi)

    # outer product over (z, phi)
    normals_row = np.stack([cphi, sphi, np.zeros(n_phi)], axis=1)
    tan_u_row = np.stack([-sphi, cphi, np.zeros(n_phi)], axis=1)
    normals = np.tile(normals_row, (n_z, 1))
    tan_u = np.tile(tan_u_row, (n_z, 1))
    tan_v = np.tile(np.array([0.0, 0.0, 1.0]), (n_z * n_phi, 1))
    centers = np.empty((n_z * n_phi, 3))
    centers[:, 0] = cyl.base_center[0] + cyl.radius * np.tile(cphi, n_z)
    centers[:, 1] = cyl.base_center[1] + cyl.radius * np.tile(sphi, n_z)
    centers[:, 2] = cyl.base_center[2] + np.repeat(z, n_phi)

    width = np.full(n_z * n_phi, cyl.radius * dphi)
    height = np.full(n_z * n_phi, dz)
    return FacetMesh(
        centers=centers,
        normals=normals,
        tan_u=tan_u,
        tan_v=tan_v,
        width=width,
        height=height,
        area=width * height,
        reference_point=np.asarray(cyl.reference_point, dtype=float),
        scatterer=cyl,
    )


def mesh_plate(
    center: np.ndarray,
    normal: np.ndarray,
    tan_u: np.ndarray,
    width: float,
    height: float,
    max_edge: float,
) -> FacetMesh:
    """Rectangular PEC plate mesh; the flat-surface oracle geometry."""
    center = np.asarray(center, dtype=float)
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    tan_u = np.asarray(tan_u, dtype=float)
    tan_u = tan_u / np.linalg.norm(tan_u)
    tan_v = np.cross(normal, tan_u)
    n_u = max(1, math.ceil(width / max_edge))
    n_v = max(1, math.ceil(height / max_edge))
    du, dv = width / n_u, height / n_v
    us = (np.arange(n_u) + 0.5) * du - width / 2.0
    vs = (np.arange(n_v) + 0.5) * dv - height / 2.0
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    count = n_u * n_v
    centers = center[None, :] + uu.reshape(-1, 1) * tan_u[None, :] + vv.reshape(-1, 1) * tan_v[None, :]
    return FacetMesh(
        centers=centers,
        normals=np.tile(normal, (count, 1)),
        tan_u=np.tile(tan_u, (count, 1)),
        tan_v=np.tile(tan_v, (count, 1)),
        width=np.full(count, du),
        height=np.full(count, dv),
        area=np.full(count, du * dv),
        reference_point=center,
        scatterer=None,
    )


# ----------------------------------------------------------------------
# legs
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ScatterLeg:
    """Antenna-to-reference-point polyline with precomputed operators.

    ``outbound_operator`` is the polarization transform for traversal from
    the antenna toward the reference point, ``inbound_operator`` for the
    reverse traversal; ``effective_point`` is the antenna position, mirrored
    across the facade plane when the leg contains a reflection, so that
    per-facet distances along the reflected leg are exact.
    """

    vertices: np.ndarray
    interactions: tuple
    unobstructed: bool
    effective_point: np.ndarray
    outbound_operator: np.ndarray = field(default_factory=lambda: _J_FLIP.copy())
    inbound_operator: np.ndarray = field(default_factory=lambda: _J_FLIP.copy())

    @property
    def antenna(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def length(self) -> float:
        seg = np.diff(self.vertices, axis=0)
        return float(np.sum(np.linalg.norm(seg, axis=1)))


def direct_leg(scene: Scene, point, reference_point) -> ScatterLeg:
    """Straight antenna-to-reference leg; occlusion tested against the scene."""
    p = np.asarray(point, dtype=float)
    ref = np.asarray(reference_point, dtype=float)
    blocked = bool(scene.segments_blocked(p[None, :], ref[None, :])[0])
    return ScatterLeg(
        vertices=np.array([p, ref]),
        interactions=(),
        unobstructed=not blocked,
        effective_point=p,
    )


def reflected_legs(scene: Scene, point, reference_point, carrier: CarrierConfig) -> list[ScatterLeg]:
    """All single-facade-reflection legs from an antenna to the reference.

    Each leg carries the antenna's mirror image and constant polarization
    operators evaluated on the reference geometry.  Occluded candidates are
    dropped.
    """
    p = np.asarray(point, dtype=float)
    ref = np.asarray(reference_point, dtype=float)
    if not scene.n_facades:
        return []
    n = scene.fac_normal
    d_p = n @ p - scene.fac_offset
    d_ref = n @ ref - scene.fac_offset
    idx = np.nonzero((d_p > EPS_GEOM) & (d_ref > EPS_GEOM))[0]
    if not len(idx):
        return []
    images = p[None, :] - 2.0 * d_p[idx, None] * n[idx]
    pts, ok = _facade_crossing(scene, images, ref, idx)
    legs = []
    for k in np.nonzero(ok)[0]:
        f = int(idx[k])
        x = pts[k]
        verts = np.array([p, x, ref])
        blocked = scene.segments_blocked(verts[:-1], verts[1:]).any()
        if blocked:
            continue
        rec = Interaction(
            kind="R",
            object_id=int(scene.fac_object[f]),
            element_id=int(scene.fac_element[f]),
            point=x,
        )
        legs.append(
            ScatterLeg(
                vertices=verts,
                interactions=(rec,),
                unobstructed=True,
                effective_point=images[k],
                outbound_operator=leg_polarization_operator(verts, (rec,), scene, carrier),
                inbound_operator=leg_polarization_operator(verts[::-1], (rec,), scene, carrier),
            )
        )
    return legs


# ----------------------------------------------------------------------
# the facet sum
# ----------------------------------------------------------------------
def _batched_spherical_basis(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized twin of em.spherical_basis (same pole fallback)."""
    rho = np.hypot(dirs[:, 0], dirs[:, 1])
    safe = rho > 1e-12
    inv = np.where(safe, rho, 1.0)
    cos_phi = np.where(safe, dirs[:, 0] / inv, 1.0)
    sin_phi = np.where(safe, dirs[:, 1] / inv, 0.0)
    cos_theta = dirs[:, 2]
    sin_theta = rho
    v = np.stack([cos_theta * cos_phi, cos_theta * sin_phi, -sin_theta], axis=1)
    h = np.stack([-sin_phi, cos_phi, np.zeros(len(dirs))], axis=1)
    pole = ~safe
    if np.any(pole):
        v[pole] = 0.0
        v[pole, 0] = np.sign(dirs[pole, 2])
        h[pole] = 0.0
        h[pole, 1] = 1.0
    return v, h


def _illumination_masks(mesh: FacetMesh, src: np.ndarray, obs: np.ndarray):
    vi = mesh.centers - src[None, :]
    r_i = np.linalg.norm(vi, axis=1)
    ki = vi / r_i[:, None]
    vs = obs[None, :] - mesh.centers
    r_s = np.linalg.norm(vs, axis=1)
    ks = vs / r_s[:, None]
    cos_i = -np.einsum("ij,ij->i", ki, mesh.normals)
    cos_s = np.einsum("ij,ij->i", ks, mesh.normals)
    live = (cos_i > 0.0) & (cos_s > 0.0)
    return ki, r_i, ks, r_s, cos_i, cos_s, live


def illuminated_visible_count(mesh: FacetMesh, src, obs) -> int:
    """Facets both lit by the source and visible from the observer."""
    src = np.asarray(src, dtype=float)
    obs = np.asarray(obs, dtype=float)
    *_, live = _illumination_masks(mesh, src, obs)
    return int(np.count_nonzero(live))


@dataclass
class _IncidentTerms:
    """Source-side facet quantities, reusable while the source stays put.

    ``phase_over_r`` is exp(-jk r_i)/r_i; ``mv``/``mh`` are the incident
    (V, H) basis vectors after the PEC mirror rule E -> 2 (n.E) n - E.
    """

    ki: np.ndarray
    cos_i: np.ndarray
    phase_over_r: np.ndarray
    mv: np.ndarray
    mh: np.ndarray


def _incident_terms(mesh: FacetMesh, src: np.ndarray, wavenumber: float) -> _IncidentTerms:
    vi = mesh.centers - src[None, :]
    r_i = np.linalg.norm(vi, axis=1)
    ki = vi / r_i[:, None]
    cos_i = -np.einsum("ij,ij->i", ki, mesh.normals)
    phase_over_r = np.exp(-1j * wavenumber * r_i) / r_i
    ev_i, eh_i = _batched_spherical_basis(ki)
    nrm = mesh.normals
    mv = 2.0 * np.einsum("ij,ij->i", nrm, ev_i)[:, None] * nrm - ev_i
    mh = 2.0 * np.einsum("ij,ij->i", nrm, eh_i)[:, None] * nrm - eh_i
    return _IncidentTerms(ki=ki, cos_i=cos_i, phase_over_r=phase_over_r, mv=mv, mh=mh)


def _facet_sum(
    mesh: FacetMesh,
    src: np.ndarray,
    obs: np.ndarray,
    carrier: CarrierConfig,
    incident: _IncidentTerms | None = None,
) -> np.ndarray:
    """Coherent facet sum: 2x2 transfer with per-facet spreading and phase.

    Input basis: (V, H) of the per-facet incident direction; output basis:
    (V, H) of the direction pointing from the observer back toward each
    facet.  Polarization per facet follows the PEC mirror rule
    E -> 2 (n.E) n - E, which is symmetric and therefore reciprocal.
    """
    lam = carrier.wavelength
    k = carrier.wavenumber
    if incident is None:
        incident = _incident_terms(mesh, src, k)
    vs = obs[None, :] - mesh.centers
    r_s = np.linalg.norm(vs, axis=1)
    ks = vs / r_s[:, None]
    cos_s = np.einsum("ij,ij->i", ks, mesh.normals)
    live = (incident.cos_i > 0.0) & (cos_s > 0.0)
    t = np.zeros((2, 2), dtype=complex)
    if not np.any(live):
        return t
    ki = incident.ki[live]
    cos_i = incident.cos_i[live]
    pref_i = incident.phase_over_r[live]
    mv, mh = incident.mv[live], incident.mh[live]
    ks, r_s, cos_s = ks[live], r_s[live], cos_s[live]
    tu, tv = mesh.tan_u[live], mesh.tan_v[live]
    w, h, area = mesh.width[live], mesh.height[live], mesh.area[live]

    diff = ki - ks
    x_arg = 0.5 * k * w * np.einsum("ij,ij->i", diff, tu)
    y_arg = 0.5 * k * h * np.einsum("ij,ij->i", diff, tv)
    pattern = np.sinc(x_arg / math.pi) ** 2 * np.sinc(y_arg / math.pi) ** 2
    sigma = 4.0 * math.pi * (area / lam) ** 2 * (0.5 * (cos_i + cos_s)) ** 2 * pattern

    amp = (
        (lam / (4.0 * math.pi))
        * np.sqrt(sigma / (4.0 * math.pi))
        / r_s
        * np.exp(-1j * k * r_s)
        * pref_i
    )

    bv, bh = _batched_spherical_basis(-ks)
    t[0, 0] = np.sum(amp * np.einsum("ij,ij->i", bv, mv))
    t[0, 1] = np.sum(amp * np.einsum("ij,ij->i", bv, mh))
    t[1, 0] = np.sum(amp * np.einsum("ij,ij->i", bh, mv))
    t[1, 1] = np.sum(amp * np.einsum("ij,ij->i", bh, mh))
    return t


def _inside_bounding_cylinder(mesh: FacetMesh, p: np.ndarray) -> bool:
    cyl = mesh.scatterer
    if cyl is None:
        return False
    rel = p - np.asarray(cyl.base_center, dtype=float)
    if not (-EPS_GEOM < rel[2] < cyl.height + EPS_GEOM):
        return False
    return math.hypot(rel[0], rel[1]) < cyl.radius + EPS_GEOM


def po_scattered_matrix(
    mesh: FacetMesh,
    incident_leg: ScatterLeg,
    scattered_leg: ScatterLeg,
    carrier: CarrierConfig,
    incident: _IncidentTerms | None = None,
) -> tuple[np.ndarray, float]:
    """Scattered 2x2 transfer and effective delay for one leg pair.

    The matrix chains the incident leg's polarization operator, the coherent
    facet sum evaluated between the legs' effective (possibly mirrored)
    endpoints, and the scattered leg's reverse-traversal operator; the delay
    follows the reference-point polyline, with per-facet differences absorbed
    into the facet phases.  ``incident`` optionally injects precomputed
    source-side facet terms for the incident leg's effective point.
    """
    if not (incident_leg.unobstructed and scattered_leg.unobstructed):
        raise ValueError("both legs must be unobstructed")
    for leg in (incident_leg, scattered_leg):
        if np.linalg.norm(leg.vertices[-1] - mesh.reference_point) > 1e-9:
            raise ValueError("leg does not terminate at the mesh reference point")
        if _inside_bounding_cylinder(mesh, leg.antenna):
            raise ValueError("antenna endpoint lies inside the scatterer body")
    t_po = _facet_sum(
        mesh,
        incident_leg.effective_point,
        scattered_leg.effective_point,
        carrier,
        incident=incident,
    )
    t = scattered_leg.inbound_operator @ _J_FLIP @ t_po @ _J_FLIP @ incident_leg.outbound_operator
    delay = (incident_leg.length + scattered_leg.length) / C0
    return t, delay


# ----------------------------------------------------------------------
# path enumeration
# ----------------------------------------------------------------------
class ScatterEngine:
    """Per-scene scattering helper with cached facet meshes."""

    def __init__(
        self,
        scene: Scene,
        carrier: CarrierConfig,
        tx_antenna: AntennaConfig = _OMNI,
        rx_antenna: AntennaConfig = _OMNI,
        leg_policy: str = "direct-only",
    ):
        if leg_policy not in LEG_POLICIES:
            raise ValueError(f"unknown leg policy {leg_policy!r}; expected one of {LEG_POLICIES}")
        self.scene = scene
        self.carrier = carrier
        self.tx_antenna = tx_antenna
        self.rx_antenna = rx_antenna
        self.leg_policy = leg_policy
        self.meshes = [mesh_cylinder(s, carrier) for s in scene.scatterers]
        self._incident_cache: dict[tuple[int, bytes], _IncidentTerms] = {}

    def _incident_for(self, mesh_index: int, src: np.ndarray) -> _IncidentTerms:
        key = (mesh_index, src.tobytes())
        inc = self._incident_cache.get(key)
        if inc is None:
            if len(self._incident_cache) > 128:
                self._incident_cache.clear()
            inc = _incident_terms(self.meshes[mesh_index], src, self.carrier.wavenumber)
            self._incident_cache[key] = inc
        return inc

    def _legs(self, point: np.ndarray, ref: np.ndarray, direct_clear: bool | None = None) -> list[ScatterLeg]:
        legs = []
        if direct_clear is None:
            leg = direct_leg(self.scene, point, ref)
        else:
            leg = ScatterLeg(
                vertices=np.array([point, ref]),
                interactions=(),
                unobstructed=direct_clear,
                effective_point=point,
            )
        if leg.unobstructed:
            legs.append(leg)
        if self.leg_policy == "direct+1-reflection":
            legs.extend(reflected_legs(self.scene, point, ref, self.carrier))
        return legs

    def paths(self, tx, rx) -> list[RayPath]:
        tx = np.asarray(tx, dtype=float)
        rx = np.asarray(rx, dtype=float)
        gain = self.tx_antenna.amplitude * self.rx_antenna.amplitude
        out: list[RayPath] = []
        if not self.meshes:
            return out
        # one batched occlusion query covers every direct leg of this snapshot
        refs = np.array([m.reference_point for m in self.meshes])
        ends = np.vstack([refs, refs])
        starts = np.vstack(
            [np.broadcast_to(tx, refs.shape), np.broadcast_to(rx, refs.shape)]
        )
        direct_blocked = self.scene.segments_blocked(starts, ends)
        n_mesh = len(self.meshes)
        for mi, mesh in enumerate(self.meshes):
            cyl = mesh.scatterer
            ref = mesh.reference_point
            tx_legs = self._legs(tx, ref, direct_clear=not direct_blocked[mi])
            rx_legs = self._legs(rx, ref, direct_clear=not direct_blocked[n_mesh + mi])
            for leg_in in tx_legs:
                for leg_out in rx_legs:
                    incident = self._incident_for(mi, leg_in.effective_point)
                    t, delay = po_scattered_matrix(
                        mesh, leg_in, leg_out, self.carrier, incident=incident
                    )
                    t = t * gain
                    s_rec = Interaction(
                        kind=SCATTERING,
                        object_id=cyl.id,
                        element_id=0,
                        point=ref,
                    )
                    inters = leg_in.interactions + (s_rec,) + tuple(reversed(leg_out.interactions))
                    verts = np.vstack([leg_in.vertices, leg_out.vertices[::-1][1:]])
                    seg = np.diff(verts, axis=0)
                    length = float(np.sum(np.linalg.norm(seg, axis=1)))
                    aod, aoa = path_angles(verts)
                    out.append(
                        RayPath(
                            interactions=inters,
                            vertices=verts,
                            delay_s=delay,
                            length_m=length,
                            aod=aod,
                            aoa=aoa,
                            transfer=t,
                            tag=TAG_SCATTER,
                        )
                    )
        return out


def enumerate_scatter_paths(
    scene: Scene,
    tx,
    rx,
    carrier: CarrierConfig,
    leg_policy: str = "direct-only",
    tx_antenna: AntennaConfig = _OMNI,
    rx_antenna: AntennaConfig = _OMNI,
) -> list[RayPath]:
    """One scatter RayPath per scatterer and unobstructed leg pair."""
    if not scene.scatterers:
        return []
    engine = ScatterEngine(scene, carrier, tx_antenna, rx_antenna, leg_policy)
    return engine.paths(tx, rx)
