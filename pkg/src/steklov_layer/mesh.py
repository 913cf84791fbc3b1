"""Triangulations resolving the boundary strip, and Gmsh MSH 2.2 I/O."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeometryError, ParseError
from .geometry import BoundaryCurve, strip_project_many

__all__ = [
    "TriMesh",
    "mesh_star_domain",
    "interior_layers_for",
    "classify_strip",
    "snap_to_curve",
    "read_msh",
    "write_msh",
    "node_strip_coords",
    "boundary_order",
]


@dataclass(frozen=True)
class TriMesh:
    """P1 triangulation of a disk-topology domain.

    ``node_s`` / ``node_depth`` hold the strip coordinates of nodes placed
    by the built-in mesher (NaN elsewhere); ``strip_flag`` is ``None`` until
    the mesh is classified against a strip width.
    """

    nodes: np.ndarray
    tris: np.ndarray
    boundary_edges: np.ndarray
    strip_flag: np.ndarray | None = None
    eps: float | None = None
    node_s: np.ndarray | None = None
    node_depth: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.tris]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def edges(self) -> np.ndarray:
        e = np.concatenate([self.tris[:, [0, 1]], self.tris[:, [1, 2]], self.tris[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @property
    def h_max(self) -> float:
        e = self.edges
        return float(np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1).max())

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.boundary_edges[:, 0]

    @property
    def perimeter(self) -> float:
        b = self.boundary_edges
        return float(np.linalg.norm(self.nodes[b[:, 1]] - self.nodes[b[:, 0]], axis=1).sum())

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    def centroids(self) -> np.ndarray:
        return self.nodes[self.tris].mean(axis=1)

    def validate(self) -> None:
        """Raise :class:`GeometryError` if a structural invariant is broken."""
        if np.any(self.areas <= 0):
            raise GeometryError("mesh has non-positive triangle area")
        e = np.concatenate([self.tris[:, [0, 1]], self.tris[:, [1, 2]], self.tris[:, [2, 0]]])
        _, counts = np.unique(np.sort(e, axis=1), axis=0, return_counts=True)
        if np.any(counts > 2):
            raise GeometryError("non-conforming mesh: edge shared by more than two triangles")
        if int((counts == 1).sum()) != len(self.boundary_edges):
            raise GeometryError("boundary edge list does not match the mesh boundary")
        b = self.boundary_edges
        nxt = dict(zip(b[:, 0].tolist(), b[:, 1].tolist()))
        if len(nxt) != len(b):
            raise GeometryError("boundary edges do not form a single cycle")
        start = int(b[0, 0])
        cur, steps = start, 0
        while True:
            cur = nxt.get(cur)
            steps += 1
            if cur is None or steps > len(b):
                raise GeometryError("boundary edges do not form a single cycle")
            if cur == start:
                break
        if steps != len(b):
            raise GeometryError("boundary edges do not form a single cycle")


# --------------------------------------------------------------------------
# built-in structured mesher
# --------------------------------------------------------------------------

def _zip_rings(outer_idx, outer_pos, inner_idx, inner_pos):
    """Triangulate the annulus between two closed rings.

    ``*_pos`` are fractional angular positions in [0, 1), ascending.
    """
    na, nb = len(outer_idx), len(inner_idx)
    tris = []
    i = j = 0
    while i < na or j < nb:
        a0, a1 = outer_idx[i % na], outer_idx[(i + 1) % na]
        b0, b1 = inner_idx[j % nb], inner_idx[(j + 1) % nb]
        next_a = outer_pos[(i + 1) % na] + (i + 1) // na
        next_b = inner_pos[(j + 1) % nb] + (j + 1) // nb
        if j >= nb or (i < na and next_a <= next_b):
            tris.append((a0, a1, b0))
            i += 1
        else:
            tris.append((a0, b1, b0))
            j += 1
    return tris


def _interior_fractions(n: int, first: float) -> np.ndarray:
    """Layer thicknesses in the radial scale factor, summing to 1.

    Geometric growth (ratio <= 1.5) from ``first`` up to a cap, then
    uniform; the cap is chosen so that exactly ``n`` layers fill [0, 1].
    """
    if n == 1:
        return np.array([1.0])
    if first * n >= 1.0:
        return np.full(n, 1.0 / n)

    def fill(cap):
        th = []
        cur = first
        for _ in range(n):
            th.append(min(cur, cap))
            cur *= 1.5
        return np.array(th)

    if fill(np.inf).sum() < 1.0:
        # too few layers for ratio 1.5; stretch the progression instead
        lo, hi = 1.5, 1e6
        for _ in range(200):
            q = math.sqrt(lo * hi)
            if first * (q ** n - 1) / (q - 1) < 1.0:
                lo = q
            else:
                hi = q
        th = first * q ** np.arange(n)
        return th / th.sum()
    lo, hi = first, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fill(mid).sum() < 1.0:
            lo = mid
        else:
            hi = mid
    th = fill(hi)
    return th / th.sum()


def interior_layers_for(curve: BoundaryCurve, eps: float, n_tangential: int, n_layer: int) -> int:
    """Number of interior layers giving size ratio <= 1.5 and cell size near the tangential spacing."""
    r_in = max(np.linalg.norm(curve.psi(np.linspace(0, curve.length, 64, endpoint=False),
                                        np.full(64, eps)), axis=1).mean(), 1e-12)
    first = (eps / n_layer) / r_in
    cap = (curve.length / n_tangential) / r_in
    n, total, cur = 0, 0.0, first
    while total < 1.0:
        total += min(cur, cap)
        cur *= 1.5
        n += 1
    return max(n, 2)


def mesh_star_domain(curve: BoundaryCurve, eps: float, n_tangential: int,
                     n_layer: int, n_interior: int | None = None) -> TriMesh:
    """Layer-conforming structured mesh of a star-shaped domain.

    Strip rings sit at depths ``k eps / n_layer`` (k = 0..n_layer) on the
    arc-length nodes ``s_i = i L / n_tangential``; the inner strip boundary
    is then scaled toward the origin through ``n_interior`` geometrically
    graded layers (the last one a fan around the origin). Ring node counts
    shrink with the radius to keep elements shape-regular.

    ``n_interior=None`` picks the count from :func:`interior_layers_for`.
    """
    if not 0 < eps < curve.max_eps:
        raise GeometryError(f"eps={eps} must lie in (0, max_eps={curve.max_eps:.6g})")
    if n_tangential < 3 or n_layer < 1:
        raise ConfigError("need n_tangential >= 3 and n_layer >= 1")
    if n_interior is None:
        n_interior = interior_layers_for(curve, eps, n_tangential, n_layer)
    if n_interior < 1:
        raise ConfigError("need n_interior >= 1")

    L = curve.length
    s_nodes = np.arange(n_tangential) * (L / n_tangential)
    gam = curve.gamma(s_nodes)
    nrm = curve.normal(s_nodes)
    depths = np.arange(n_layer + 1) * (eps / n_layer)

    nodes = [gam[None, :, :] - depths[:, None, None] * nrm[None, :, :]]
    nodes = list(nodes[0])
    node_s = [s_nodes] * (n_layer + 1)
    node_depth = [np.full(n_tangential, d) for d in depths]
    frac = np.arange(n_tangential) / n_tangential
    rings = []  # (indices, fractional positions)
    offset = 0
    for _ in range(n_layer + 1):
        rings.append((np.arange(offset, offset + n_tangential), frac))
        offset += n_tangential

    inner_curve = nodes[-1]
    thick = _interior_fractions(n_interior, (eps / n_layer) /
                                float(np.linalg.norm(inner_curve, axis=1).mean()))
    radii = 1.0 - np.cumsum(thick)[:-1]
    n_prev = n_tangential
    r_in = float(np.linalg.norm(inner_curve, axis=1).mean())
    l_in = float(np.linalg.norm(np.diff(np.vstack([inner_curve, inner_curve[:1]]), axis=0),
                                axis=1).sum())
    min_nodes = min(n_tangential, 6)
    ext = np.vstack([inner_curve, inner_curve[:1]])
    for k, r in enumerate(radii):
        n_r = n_prev
        # coarsen only once layers are about as thick as the ring spacing,
        # otherwise the transition triangles get near-flat angles
        if thick[k] * r_in >= 0.6 * r * l_in / n_prev:
            n_r = min(n_prev, max(int(math.ceil(n_tangential * r)), min_nodes))
        pos = np.arange(n_r) / n_r
        # piecewise linear along the inner strip polygon keeps rings nested
        u = pos * n_tangential
        i0 = np.floor(u).astype(int)
        w = (u - i0)[:, None]
        pts = r * ((1 - w) * ext[i0] + w * ext[i0 + 1])
        nodes.append(pts)
        node_s.append(np.full(n_r, np.nan))
        node_depth.append(np.full(n_r, np.nan))
        rings.append((np.arange(offset, offset + n_r), pos))
        offset += n_r
        n_prev = n_r
    center = offset
    nodes.append(np.zeros((1, 2)))
    node_s.append(np.array([np.nan]))
    node_depth.append(np.array([np.nan]))

    tris = []
    n_strip_tris = 0
    for k, (a, b) in enumerate(zip(rings[:-1], rings[1:])):
        tris.extend(_zip_rings(a[0], a[1], b[0], b[1]))
        if k == n_layer - 1:
            n_strip_tris = len(tris)
    last = rings[-1][0]
    for i in range(len(last)):
        tris.append((last[i], last[(i + 1) % len(last)], center))

    nodes = np.vstack(nodes)
    tris = np.asarray(tris, dtype=np.int64)
    p = nodes[tris]
    sa = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
         (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = sa < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    strip_flag = np.zeros(len(tris), dtype=bool)
    strip_flag[:n_strip_tris] = True
    ring0 = np.arange(n_tangential)
    bedges = np.stack([ring0, np.roll(ring0, -1)], axis=1)
    mesh = TriMesh(nodes=nodes, tris=tris, boundary_edges=bedges, strip_flag=strip_flag,
                   eps=float(eps), node_s=np.concatenate(node_s),
                   node_depth=np.concatenate(node_depth),
                   meta={"n_tangential": n_tangential, "n_layer": n_layer,
                         "n_interior": n_interior, "n_strip_nodes": n_tangential * (n_layer + 1)})
    if np.any(mesh.areas <= 0):
        raise GeometryError("mesher produced an inverted triangle; eps too large for this curve")
    return mesh


# --------------------------------------------------------------------------


def classify_strip(mesh: TriMesh, curve: BoundaryCurve, eps: float) -> TriMesh:
    """Flag triangles whose centroid lies within distance ``eps`` of the boundary."""
    s, t = strip_project_many(curve, mesh.centroids(), eps)
    return replace(mesh, strip_flag=~np.isnan(s), eps=float(eps))


def snap_to_curve(mesh: TriMesh, curve: BoundaryCurve) -> TriMesh:
    """Move boundary nodes onto the analytic curve (nearest point).

    Raises :class:`GeometryError` if a node moves farther than ``h_max/10``.
    """
    b = np.unique(mesh.boundary_edges)
    pts = mesh.nodes[b]
    reach = min(0.5 * curve.max_eps, max(mesh.h_max, 1e-6))
    # project from slightly inside so that nodes outside the curve also resolve
    seeds = np.linspace(0.0, curve.length, 2048, endpoint=False)
    g = curve.gamma(seeds)
    k = ((pts[:, None, :] - g[None, :, :]) ** 2).sum(-1).argmin(axis=1)
    s = seeds[k]
    for _ in range(50):
        diff = pts - curve.gamma(s)
        g1 = curve.gamma(s, 1)
        f = (diff * g1).sum(1)
        fp = -1.0 + (diff * curve.gamma(s, 2)).sum(1)
        step = f / fp
        s = s - step
        if np.abs(step).max() < 1e-14:
            break
    snapped = curve.gamma(s)
    move = np.linalg.norm(snapped - pts, axis=1)
    if move.max() > max(mesh.h_max / 10, 1e-12) and move.max() > reach:
        raise GeometryError("boundary node lies too far from the curve to snap")
    nodes = mesh.nodes.copy()
    nodes[b] = snapped
    return replace(mesh, nodes=nodes)


# --------------------------------------------------------------------------
# Gmsh MSH 2.2 ASCII
# --------------------------------------------------------------------------

_NODES_PER_TYPE = {1: 2, 2: 3, 15: 1}


def read_msh(path) -> TriMesh:
    """Read a Gmsh MSH 2.2 ASCII file with line (type 1) and triangle (type 2) elements."""
    lines = Path(path).read_text().splitlines()
    pos = 0

    def expect(tag):
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines) or lines[pos].strip() != tag:
            raise ParseError(f"expected {tag}", line=pos + 1)
        pos += 1

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of file", line=pos + 1)
        pos += 1
        return pos, lines[pos - 1].split()

    expect("$MeshFormat")
    ln, fmt = next_line()
    if len(fmt) < 3 or not fmt[0].startswith("2.") or fmt[1] != "0":
        raise ParseError("only ASCII MSH 2.x is supported", line=ln)
    expect("$EndMeshFormat")

    # skip optional sections until $Nodes
    while pos < len(lines) and lines[pos].strip() != "$Nodes":
        if lines[pos].strip().startswith("$") and not lines[pos].strip().startswith("$End"):
            tag = lines[pos].strip()[1:]
            end = "$End" + tag
            while pos < len(lines) and lines[pos].strip() != end:
                pos += 1
        pos += 1
    expect("$Nodes")
    ln, head = next_line()
    try:
        n_nodes = int(head[0])
    except (ValueError, IndexError):
        raise ParseError("bad node count", line=ln) from None
    tag_to_idx = {}
    coords = np.empty((n_nodes, 2))
    for i in range(n_nodes):
        ln, parts = next_line()
        try:
            tag_to_idx[int(parts[0])] = i
            coords[i] = float(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            raise ParseError("malformed node record", line=ln) from None
    expect("$EndNodes")
    expect("$Elements")
    ln, head = next_line()
    try:
        n_el = int(head[0])
    except (ValueError, IndexError):
        raise ParseError("bad element count", line=ln) from None
    tris, edges = [], []
    for _ in range(n_el):
        ln, parts = next_line()
        try:
            etype = int(parts[1])
            ntags = int(parts[2])
        except (ValueError, IndexError):
            raise ParseError("malformed element record", line=ln) from None
        if etype not in _NODES_PER_TYPE:
            raise ParseError(f"unsupported element type {etype}", line=ln)
        ids = parts[3 + ntags:]
        if len(ids) != _NODES_PER_TYPE[etype]:
            raise ParseError("wrong node count for element", line=ln)
        try:
            idx = [tag_to_idx[int(t)] for t in ids]
        except KeyError as exc:
            raise ParseError(f"element references unknown node {exc.args[0]}", line=ln) from None
        if etype == 2:
            tris.append(idx)
        elif etype == 1:
            edges.append(idx)
    expect("$EndElements")

    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    p = coords[tris]
    sa = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
         (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    tris[sa < 0] = tris[sa < 0][:, [0, 2, 1]]
    bedges = _orient_boundary(tris, np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    return TriMesh(nodes=coords, tris=tris, boundary_edges=bedges)


def _orient_boundary(tris, edges):
    """Orient boundary edges counterclockwise (domain on the left)."""
    directed = set()
    for a, b, c in tris.tolist():
        directed.update([(a, b), (b, c), (c, a)])
    if len(edges) == 0:
        # derive from the mesh: edges used once
        und = {}
        for a, b in directed:
            key = (min(a, b), max(a, b))
            und[key] = und.get(key, 0) + 1
        edges = np.array([k for k, v in und.items() if v == 1], dtype=np.int64).reshape(-1, 2)
    out = []
    for a, b in edges.tolist():
        out.append((a, b) if (a, b) in directed else (b, a))
    # chain into a cycle
    nxt = {a: b for a, b in out}
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    start = out[0][0]
    chain = [start]
    while True:
        n = nxt.get(chain[-1])
        if n is None or n == start or len(chain) > len(out):
            break
        chain.append(n)
    if len(chain) == len(out):
        return np.stack([chain, np.roll(chain, -1)], axis=1).astype(np.int64)
    return np.asarray(out, dtype=np.int64)


def write_msh(mesh: TriMesh, path) -> None:
    """Write ``mesh`` as MSH 2.2 ASCII; boundary lines get physical tag 1, triangles tag 2 (strip) or 3."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_nodes)]
    out.extend(f"{i + 1} {x:.17g} {y:.17g} 0" for i, (x, y) in enumerate(mesh.nodes))
    out.append("$EndNodes")
    n_el = len(mesh.boundary_edges) + len(mesh.tris)
    out.extend(["$Elements", str(n_el)])
    k = 1
    for a, b in mesh.boundary_edges:
        out.append(f"{k} 1 2 1 1 {a + 1} {b + 1}")
        k += 1
    flags = mesh.strip_flag if mesh.strip_flag is not None else np.zeros(len(mesh.tris), bool)
    for (a, b, c), f in zip(mesh.tris, flags):
        phys = 2 if f else 3
        out.append(f"{k} 2 2 {phys} {phys} {a + 1} {b + 1} {c + 1}")
        k += 1
    out.append("$EndElements")
    Path(path).write_text("\n".join(out) + "\n")


def node_strip_coords(mesh: TriMesh, curve: BoundaryCurve):
    """Arc length and depth of every node (built-in meshes store them exactly).

    Nodes far from the boundary get approximate values; callers only use
    the strip nodes.
    """
    if mesh.node_s is not None and not np.isnan(mesh.node_s[mesh.boundary_nodes]).any():
        s = mesh.node_s.copy()
        d = mesh.node_depth.copy()
        miss = np.isnan(s)
        if miss.any():
            s[miss], d[miss] = _far_coords(curve, mesh.nodes[miss])
        return s, d
    return _far_coords(curve, mesh.nodes)


def _far_coords(curve, pts):
    from .geometry import closest_point
    out_s = np.full(len(pts), np.nan)
    out_d = np.full(len(pts), np.inf)
    seeds = curve.gamma(np.linspace(0.0, curve.length, 1024, endpoint=False))
    dist = np.empty(len(pts))
    for lo in range(0, len(pts), 2048):
        chunk = pts[lo:lo + 2048]
        dist[lo:lo + 2048] = np.sqrt(((chunk[:, None] - seeds[None]) ** 2).sum(-1).min(1))
    near = dist < curve.max_eps
    if near.any():
        s, d = closest_point(curve, pts[near])
        out_s[near], out_d[near] = s, d
    return out_s, out_d


def boundary_order(mesh: TriMesh, curve: BoundaryCurve):
    """Boundary node indices sorted by arc length, with their arc lengths."""
    b = mesh.boundary_nodes
    if mesh.node_s is not None and not np.isnan(mesh.node_s[b]).any():
        s = mesh.node_s[b]
    else:
        from .geometry import closest_point
        s, _ = closest_point(curve, mesh.nodes[b])
    order = np.argsort(s, kind="stable")
    return b[order], s[order]
