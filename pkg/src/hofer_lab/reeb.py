"""Reeb graphs of autonomous Hamiltonians on the annulus glued into a sphere.

The annulus is closed up by two caps: one of area ``s`` along the bottom
circle and one of area ``2A - 1 - s`` along the top circle, so the sphere has
area ``2A``. The field extends over both caps by its boundary value 0.

Construction follows the join tree / split tree merge for contour trees.
Cells with equal values that touch along an edge are collapsed into one
plateau vertex first; remaining ties are broken by (value, smallest cell
index). Superlevel sets are connected through cell edges (4-adjacency) and
sublevel sets through edges and corners (8-adjacency).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from numba import njit

from .field import ScalarField


class ReebError(RuntimeError):
    """The construction did not produce a tree (tie-breaking or implementation fault)."""


@dataclass(frozen=True, eq=False)
class SphereModel:
    base: ScalarField
    s: float
    A: float
    offset: float = 0.0

    def __post_init__(self):
        if not 0.5 < self.A:
            raise ValueError(f"A = {self.A} must exceed 1/2")
        tol = 1e-12
        if self.s < -tol or self.top_cap < -tol:
            raise ValueError(f"cap areas must be non-negative (s={self.s}, 2A-1-s={self.top_cap})")

    @property
    def top_cap(self) -> float:
        return 2 * self.A - 1 - self.s

    @property
    def total_area(self) -> float:
        return 2 * self.A


# -- compiled pieces ---------------------------------------------------------

@njit(cache=True)
def _find(parent, x):
    r = x
    while parent[r] != r:
        r = parent[r]
    while parent[x] != r:
        nxt = parent[x]
        parent[x] = r
        x = nxt
    return r


@njit(cache=True)
def _link(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@njit(cache=True)
def _plateaus(vals, cap_b, cap_t):
    nh, nt = vals.shape
    N = nh * nt
    parent = np.arange(N + 2)
    for j in range(nh):
        for i in range(nt):
            c = j * nt + i
            v = vals[j, i]
            if vals[j, (i + 1) % nt] == v:
                _link(parent, c, j * nt + (i + 1) % nt)
            if j + 1 < nh and vals[j + 1, i] == v:
                _link(parent, c, c + nt)
            if j == 0 and v == cap_b:
                _link(parent, c, N)
            if j == nh - 1 and v == cap_t:
                _link(parent, c, N + 1)
    label = np.full(N + 2, -1, dtype=np.int64)
    nlab = 0
    for x in range(N + 2):
        r = _find(parent, x)
        if label[r] < 0:
            label[r] = nlab
            nlab += 1
        label[x] = label[r]
    return label, nlab


@njit(cache=True)
def _pairs(label, nh, nt, diagonal):
    N = nh * nt
    cap = N * (4 if diagonal else 2) + 2 * nt
    a = np.empty(cap, dtype=np.int64)
    b = np.empty(cap, dtype=np.int64)
    k = 0
    for j in range(nh):
        for i in range(nt):
            c = j * nt + i
            lc = label[c]
            nbrs = [j * nt + (i + 1) % nt]
            if j + 1 < nh:
                nbrs.append(c + nt)
                if diagonal:
                    nbrs.append((j + 1) * nt + (i + 1) % nt)
                    nbrs.append((j + 1) * nt + (i - 1) % nt)
            if j == 0:
                nbrs.append(N)
            if j == nh - 1:
                nbrs.append(N + 1)
            for u in nbrs:
                lu = label[u]
                if lu != lc:
                    a[k] = min(lc, lu)
                    b[k] = max(lc, lu)
                    k += 1
    return a[:k], b[:k]


@njit(cache=True)
def _sweep(order, indptr, indices, P):
    uf = np.full(P, -1, dtype=np.int64)
    ext = np.empty(P, dtype=np.int64)
    tparent = np.full(P, -1, dtype=np.int64)
    for v in order:
        uf[v] = v
        ext[v] = v
        for k in range(indptr[v], indptr[v + 1]):
            u = indices[k]
            if uf[u] < 0:
                continue
            ru = _find(uf, u)
            rv = _find(uf, v)
            if ru != rv:
                tparent[ext[ru]] = v
                uf[ru] = rv
                ext[rv] = v
    return tparent


@njit(cache=True)
def _merge(jparent, sparent):
    P = jparent.size
    upJ = np.zeros(P, dtype=np.int64)
    xJ = np.zeros(P, dtype=np.int64)
    dnS = np.zeros(P, dtype=np.int64)
    xS = np.zeros(P, dtype=np.int64)
    for x in range(P):
        p = jparent[x]
        if p >= 0:
            upJ[p] += 1
            xJ[p] ^= x
        p = sparent[x]
        if p >= 0:
            dnS[p] += 1
            xS[p] ^= x
    queue = np.empty(P, dtype=np.int64)
    inq = np.zeros(P, dtype=np.bool_)
    head = 0
    tail = 0
    for x in range(P):
        if upJ[x] + dnS[x] == 1:
            queue[tail] = x
            tail += 1
            inq[x] = True
    arc_a = np.empty(max(P - 1, 0), dtype=np.int64)
    arc_b = np.empty(max(P - 1, 0), dtype=np.int64)
    na = 0
    remaining = P
    while remaining > 1:
        if head >= tail:
            return arc_a, arc_b, -1
        x = queue[head]
        head += 1
        if upJ[x] == 0 and dnS[x] == 1:
            y = jparent[x]
            if y < 0:
                return arc_a, arc_b, -1
            upJ[y] -= 1
            xJ[y] ^= x
            c = xS[x]
            p = sparent[x]
            sparent[c] = p
            if p >= 0:
                xS[p] ^= x ^ c
        elif upJ[x] == 1 and dnS[x] == 0:
            y = sparent[x]
            if y < 0:
                return arc_a, arc_b, -1
            dnS[y] -= 1
            xS[y] ^= x
            c = xJ[x]
            p = jparent[x]
            jparent[c] = p
            if p >= 0:
                xJ[p] ^= x ^ c
        else:
            return arc_a, arc_b, -1
        arc_a[na] = x
        arc_b[na] = y
        na += 1
        remaining -= 1
        if not inq[y] and upJ[y] + dnS[y] == 1:
            queue[tail] = y
            tail += 1
            inq[y] = True
    return arc_a, arc_b, na


@njit(cache=True)
def _reduce(indptr, indices, rank, P):
    """Walk chains of regular vertices between critical ones.

    Returns per-vertex arc id (-1 for critical vertices) and the arc endpoints
    (lower, upper) as vertex ids.
    """
    up = np.zeros(P, dtype=np.int64)
    dn = np.zeros(P, dtype=np.int64)
    upn = np.full(P, -1, dtype=np.int64)
    for v in range(P):
        for k in range(indptr[v], indptr[v + 1]):
            u = indices[k]
            if rank[u] > rank[v]:
                up[v] += 1
                upn[v] = u
            else:
                dn[v] += 1
    critical = np.empty(P, dtype=np.bool_)
    for v in range(P):
        critical[v] = not (up[v] == 1 and dn[v] == 1)
    arc_of = np.full(P, -1, dtype=np.int64)
    lo = np.empty(P, dtype=np.int64)
    hi = np.empty(P, dtype=np.int64)
    na = 0
    for c in range(P):
        if not critical[c]:
            continue
        for k in range(indptr[c], indptr[c + 1]):
            u = indices[k]
            if rank[u] < rank[c]:
                continue
            while not critical[u]:
                arc_of[u] = na
                u = upn[u]
            lo[na] = c
            hi[na] = u
            na += 1
    return arc_of, lo[:na], hi[:na], critical


def _csr(a, b, P):
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    order = np.argsort(src, kind="stable")
    indptr = np.zeros(P + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst[order].astype(np.int64)


def _unique_pairs(a, b, P):
    key = np.unique(a * P + b)
    return key // P, key % P


# -- graph types ---------------------------------------------------------------

@dataclass
class ReebNode:
    id: int
    value: float
    kind: str
    mass: float
    cap_area: float = 0.0
    cells: int = 0


@dataclass
class ReebArc:
    id: int
    lo: int
    hi: int
    measure: float
    values: np.ndarray = dc_field(repr=False)
    masses: np.ndarray = dc_field(repr=False)


@dataclass
class ReebGraph:
    nodes: list[ReebNode]
    arcs: list[ReebArc]
    total_measure: float
    A: float
    cell_arc: np.ndarray = dc_field(repr=False)
    cell_node: np.ndarray = dc_field(repr=False)

    def incident(self, v: int) -> list[tuple[int, int]]:
        """(arc id, other node) pairs at node ``v``."""
        return self._adj[v]

    def __post_init__(self):
        self._adj: list[list[tuple[int, int]]] = [[] for _ in self.nodes]
        for a in self.arcs:
            self._adj[a.lo].append((a.id, a.hi))
            self._adj[a.hi].append((a.id, a.lo))

    def component_count(self, level: float) -> int:
        """Number of level-set components at a level that is not a node value."""
        return sum(1 for a in self.arcs
                   if self.nodes[a.lo].value < level < self.nodes[a.hi].value)

    def is_tree(self) -> bool:
        if len(self.nodes) - len(self.arcs) != 1:
            return False
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for _, u in self._adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == len(self.nodes)

    def to_dict(self) -> dict:
        return {
            "A": self.A,
            "total_measure": self.total_measure,
            "nodes": [{"id": n.id, "value": n.value, "kind": n.kind, "mass": n.mass,
                       "cap_area": n.cap_area} for n in self.nodes],
            "arcs": [{"id": a.id, "lo": a.lo, "hi": a.hi, "measure": a.measure} for a in self.arcs],
        }

    def edge_list(self) -> str:
        """Graphviz ``graph`` source with arc measures as labels."""
        lines = ["graph reeb {"]
        for n in self.nodes:
            lines.append(f'  n{n.id} [label="{n.kind} {n.value:.4g}"];')
        for a in self.arcs:
            lines.append(f'  n{a.lo} -- n{a.hi} [label="{a.measure:.4g}"];')
        lines.append("}")
        return "\n".join(lines)


def build_reeb(model: SphereModel) -> ReebGraph:
    f = model.base
    nh, nt = f.grid.shape
    N = nh * nt
    vals = f.values + model.offset
    cap_val = 0.0 + model.offset
    label, P = _plateaus(vals, cap_val, cap_val)

    cell_area = f.grid.cell_area
    areas = np.full(N + 2, cell_area)
    areas[N] = model.s
    areas[N + 1] = model.top_cap
    pv = np.empty(P)
    pv[label[:N]] = vals.ravel()
    pv[label[N]] = cap_val
    pv[label[N + 1]] = cap_val
    pmass = np.bincount(label, weights=areas, minlength=P)
    ncells = np.bincount(label[:N], minlength=P)
    rep = np.full(P, N + 2, dtype=np.int64)
    np.minimum.at(rep, label, np.arange(N + 2))
    order = np.lexsort((rep, pv))  # ascending (value, smallest member)
    rank = np.empty(P, dtype=np.int64)
    rank[order] = np.arange(P)

    a4, b4 = _unique_pairs(*_pairs(label, nh, nt, False), P)
    a8, b8 = _unique_pairs(*_pairs(label, nh, nt, True), P)
    ip4, ix4 = _csr(a4, b4, P)
    ip8, ix8 = _csr(a8, b8, P)
    jparent = _sweep(order[::-1].copy(), ip4, ix4, P)
    sparent = _sweep(order, ip8, ix8, P)
    ca, cb, na = _merge(jparent, sparent)
    if na != P - 1:
        raise ReebError("merge of join and split trees did not produce a tree")
    ipc, ixc = _csr(ca, cb, P)
    arc_of, lo, hi, critical = _reduce(ipc, ixc, rank, P)
    if len(lo) != int(critical.sum()) - 1:
        raise ReebError("reduced graph is not a tree (cycle detected)")

    crit_ids = np.nonzero(critical)[0]
    node_of = np.full(P, -1, dtype=np.int64)
    node_of[crit_ids] = np.arange(len(crit_ids))
    cap_b, cap_t = label[N], label[N + 1]

    up_count = np.zeros(len(crit_ids), dtype=int)
    dn_count = np.zeros(len(crit_ids), dtype=int)
    for l_, h_ in zip(lo, hi):
        up_count[node_of[l_]] += 1
        dn_count[node_of[h_]] += 1

    nodes = []
    for k, v in enumerate(crit_ids):
        cap_area = (model.s if v == cap_b else 0.0) + (model.top_cap if v == cap_t else 0.0)
        if v == cap_b or v == cap_t:
            kind = "cap"
        elif dn_count[k] == 0:
            kind = "min"
        elif up_count[k] == 0:
            kind = "max"
        else:
            kind = "saddle"
        nodes.append(ReebNode(k, float(pv[v]), kind, float(pmass[v]), cap_area, int(ncells[v])))

    members = np.nonzero(arc_of >= 0)[0]
    srt = members[np.lexsort((rank[members], arc_of[members]))]
    bounds = np.searchsorted(arc_of[srt], np.arange(len(lo) + 1))
    arcs = []
    for k in range(len(lo)):
        chain = srt[bounds[k]:bounds[k + 1]]
        arcs.append(ReebArc(k, int(node_of[lo[k]]), int(node_of[hi[k]]),
                            float(pmass[chain].sum()), pv[chain].copy(), pmass[chain].copy()))

    cell_lab = label[:N]
    cell_arc = arc_of[cell_lab].reshape(nh, nt)
    cell_node = node_of[cell_lab].reshape(nh, nt)
    total = float(pmass.sum())
    graph = ReebGraph(nodes, arcs, total, model.A, cell_arc, cell_node)
    if not graph.is_tree():
        raise ReebError("Reeb graph of a function on the sphere must be a tree")
    return graph


# -- median ------------------------------------------------------------------

@dataclass
class MedianResult:
    """A point of the tree: a node, or an arc point ``offset`` mass away from ``start``."""

    kind: str  # "node" or "arc"
    index: int
    value: float
    component_measures: list[float]
    start: int = -1
    offset: float = 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "index": self.index, "value": self.value,
                "component_measures": self.component_measures,
                "start": self.start, "offset": self.offset}


def _branch_weights(g: ReebGraph) -> dict[tuple[int, int], float]:
    """Measure of the component of T minus v entered through arc ``a``, keyed (v, a)."""
    n = len(g.nodes)
    parent = [-1] * n
    parent_arc = [-1] * n
    order = []
    seen = [False] * n
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        order.append(v)
        for a, u in g.incident(v):
            if not seen[u]:
                seen[u] = True
                parent[u] = v
                parent_arc[u] = a
                stack.append(u)
    sub = [nd.mass for nd in g.nodes]
    for v in reversed(order):
        if parent[v] >= 0:
            sub[parent[v]] += sub[v] + g.arcs[parent_arc[v]].measure
    M = g.total_measure
    w = {}
    for v in range(n):
        if parent[v] >= 0:
            a = parent_arc[v]
            w[(v, a)] = M - sub[v]
            w[(parent[v], a)] = sub[v] + g.arcs[a].measure
    return w


def _arc_value(g: ReebGraph, arc: ReebArc, start: int, offset: float) -> float:
    lo_v = g.nodes[arc.lo].value
    hi_v = g.nodes[arc.hi].value
    cum = np.cumsum(arc.masses) - arc.masses / 2
    knots_x = np.concatenate([[0.0], cum, [arc.measure]])
    knots_y = np.concatenate([[lo_v], arc.values, [hi_v]])
    pos = offset if start == arc.lo else arc.measure - offset
    return float(np.interp(pos, knots_x, knots_y))


def component_measures_at(g: ReebGraph, kind: str, index: int, start: int = -1,
                          offset: float = 0.0, weights=None) -> list[float]:
    """Measures of the components of T minus the given point."""
    w = _branch_weights(g) if weights is None else weights
    if kind == "node":
        return [w[(index, a)] for a, _ in g.incident(index)]
    far = w[(start, index)] - offset
    return [g.total_measure - far, far]


def find_median(g: ReebGraph) -> MedianResult:
    """Tree point whose complementary components all have measure <= A."""
    A = g.total_measure / 2
    w = _branch_weights(g)
    tol = 1e-12 * max(1.0, g.total_measure)
    leaves = [nd.id for nd in g.nodes if len(g.incident(nd.id)) <= 1]
    v = leaves[0] if leaves else 0
    for _ in range(len(g.nodes) + 1):
        inc = g.incident(v)
        if not inc:
            return MedianResult("node", v, g.nodes[v].value, [])
        comps = [(w[(v, a)], a, u) for a, u in inc]
        heavy, a, u = max(comps)
        if heavy <= A + tol:
            return MedianResult("node", v, g.nodes[v].value, [c for c, _, _ in comps])
        m_star = heavy - A
        arc = g.arcs[a]
        if m_star < arc.measure:
            val = _arc_value(g, arc, v, m_star)
            return MedianResult("arc", a, val, [g.total_measure - heavy + m_star, heavy - m_star],
                                start=v, offset=m_star)
        v = u
    raise ReebError("median walk did not terminate")


def perturbed_measures(g: ReebGraph, m: MedianResult, eta: float) -> list[list[float]]:
    """Component measures at tree points ``eta`` (in measure) past the median."""
    w = _branch_weights(g)
    out = []
    if m.kind == "node":
        for a, _ in g.incident(m.index):
            out.append(component_measures_at(g, "arc", a, m.index, eta, w))
    else:
        arc = g.arcs[m.index]
        for off in (m.offset - eta, m.offset + eta):
            if 0 < off < arc.measure:
                out.append(component_measures_at(g, "arc", m.index, m.start, off, w))
    return out


def write_reeb_json(g: ReebGraph, median: MedianResult | None, path: str | Path) -> None:
    path = Path(path)
    doc = g.to_dict()
    if median is not None:
        doc["median"] = median.to_dict()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True))
    tmp.replace(path)
