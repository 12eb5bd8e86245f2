"""Tanner graph representation for LDPC codes.

Provides the graph container used by every decoder, alist text parsing and
serialization, syndrome computation, puncture-mask file IO, and a seeded
generator for (dv,dc)-regular test codes.

Conventions:
  - variable nodes (VNs) are indexed 0..n-1, check nodes (CNs) 0..m-1
  - adjacency lists are ordered; decoders rely on that order being stable
  - alist files are 1-indexed; zero entries used as padding are ignored
"""

import numpy as np


class TannerGraph:
    """Bipartite code graph. Immutable after construction."""

    def __init__(self, vn_adj, cn_adj, punctured=None):
        self.n = len(vn_adj)
        self.m = len(cn_adj)
        self.vn_adj = [list(a) for a in vn_adj]
        self.cn_adj = [list(a) for a in cn_adj]
        if punctured is None:
            punctured = np.zeros(self.n, dtype=bool)
        self.punctured = np.asarray(punctured, dtype=bool).copy()
        if self.punctured.shape != (self.n,):
            raise ValueError("puncture mask length %d != n=%d"
                             % (self.punctured.size, self.n))
        self._validate()
        self._edge_index = None

    def _validate(self):
        if self.n == 0 or self.m == 0:
            raise ValueError("empty graph")
        for i, adj in enumerate(self.vn_adj):
            if len(adj) < 1:
                raise ValueError("variable node %d has degree 0" % i)
            if len(set(adj)) != len(adj):
                raise ValueError("variable node %d has duplicate edges" % i)
            for j in adj:
                if not (0 <= j < self.m):
                    raise ValueError("variable node %d lists check %d out of range" % (i, j))
        for j, adj in enumerate(self.cn_adj):
            if len(adj) < 2:
                raise ValueError("check node %d has degree %d < 2" % (j, len(adj)))
            if len(set(adj)) != len(adj):
                raise ValueError("check node %d has duplicate edges" % j)
            for i in adj:
                if not (0 <= i < self.n):
                    raise ValueError("check node %d lists variable %d out of range" % (j, i))
        vn_sets = [set(a) for a in self.vn_adj]
        cn_sets = [set(a) for a in self.cn_adj]
        for i, adj in enumerate(vn_sets):
            for j in adj:
                if i not in cn_sets[j]:
                    raise ValueError("asymmetric adjacency: edge (%d,%d) only on variable side" % (i, j))
        for j, adj in enumerate(cn_sets):
            for i in adj:
                if j not in vn_sets[i]:
                    raise ValueError("asymmetric adjacency: edge (%d,%d) only on check side" % (i, j))

    @property
    def vn_degrees(self):
        return np.array([len(a) for a in self.vn_adj])

    @property
    def cn_degrees(self):
        return np.array([len(a) for a in self.cn_adj])

    @property
    def n_edges(self):
        return int(sum(len(a) for a in self.vn_adj))

    def edge_index(self):
        if self._edge_index is None:
            self._edge_index = EdgeIndex(self)
        return self._edge_index

    def with_puncture(self, mask):
        """Copy of this graph with a different puncture mask."""
        return TannerGraph(self.vn_adj, self.cn_adj, punctured=mask)


class EdgeIndex:
    """Flat edge-major arrays for vectorized message passing.

    Edges are numbered in VN-major order (VN 0's edges first, in adjacency
    order). cn_edge/cn_ptr give the same edges permuted to CN-major order.
    """

    def __init__(self, graph):
        n, m = graph.n, graph.m
        vn_of, cn_of = [], []
        vn_ptr = [0]
        eid = {}
        for i, adj in enumerate(graph.vn_adj):
            for j in adj:
                eid[(i, j)] = len(vn_of)
                vn_of.append(i)
                cn_of.append(j)
            vn_ptr.append(len(vn_of))
        cn_edge = []
        cn_ptr = [0]
        for j, adj in enumerate(graph.cn_adj):
            for i in adj:
                cn_edge.append(eid[(i, j)])
            cn_ptr.append(len(cn_edge))
        self.n_edges = len(vn_of)
        self.vn_of_edge = np.array(vn_of, dtype=np.int32)
        self.cn_of_edge = np.array(cn_of, dtype=np.int32)
        self.vn_ptr = np.array(vn_ptr, dtype=np.int64)
        self.cn_edge = np.array(cn_edge, dtype=np.int32)
        self.cn_ptr = np.array(cn_ptr, dtype=np.int64)
        self.vn_deg = np.diff(self.vn_ptr).astype(np.int32)
        self.cn_deg = np.diff(self.cn_ptr).astype(np.int32)
        # degree of the CN each edge belongs to, in vn-major edge order
        self.cn_deg_of_edge = self.cn_deg[self.cn_of_edge]
        # variable index seen by each CN-major edge slot
        self.vn_of_cn_edge = self.vn_of_edge[self.cn_edge]


def syndrome(graph, bits):
    """Per-check XOR of the incident bits. All-zero iff `bits` is a codeword."""
    bits = np.asarray(bits)
    if bits.shape != (graph.n,):
        raise ValueError("bits length %d != n=%d" % (bits.size, graph.n))
    ei = graph.edge_index()
    b = bits.astype(np.uint8)[ei.vn_of_cn_edge]
    return np.bitwise_xor.reduceat(b, ei.cn_ptr[:-1])


def is_codeword(graph, bits):
    return not syndrome(graph, bits).any()


def parse_alist(text):
    """Parse alist text into a TannerGraph.

    Format: line 1 "n m", line 2 "max_dv max_dc", line 3 the n variable
    degrees, line 4 the m check degrees, then n lines of check neighbors per
    variable and m lines of variable neighbors per check, all 1-indexed.
    Zero entries (padding) are skipped.
    """
    lines = text.splitlines()

    def ints(lineno, expect=None):
        if lineno > len(lines):
            raise ValueError("line %d: unexpected end of file" % lineno)
        try:
            vals = [int(tok) for tok in lines[lineno - 1].split()]
        except ValueError:
            raise ValueError("line %d: non-integer token" % lineno) from None
        if expect is not None and len(vals) != expect:
            raise ValueError("line %d: expected %d entries, found %d"
                             % (lineno, expect, len(vals)))
        return vals

    hdr = ints(1)
    if len(hdr) != 2:
        raise ValueError("line 1: header must be 'n m'")
    n, m = hdr
    if n < 1 or m < 1:
        raise ValueError("line 1: n and m must be positive")
    ints(2, 2)  # declared max degrees; informational only
    dv = ints(3, n)
    dc = ints(4, m)

    def adj_rows(first_line, count, degs, limit, side):
        rows = []
        for r in range(count):
            lineno = first_line + r
            vals = [v for v in ints(lineno) if v != 0]
            if len(vals) != degs[r]:
                raise ValueError("line %d: %s %d lists %d neighbors, degree line says %d"
                                 % (lineno, side, r, len(vals), degs[r]))
            for v in vals:
                if not (1 <= v <= limit):
                    raise ValueError("line %d: index %d out of range 1..%d"
                                     % (lineno, v, limit))
            rows.append([v - 1 for v in vals])
        return rows

    vn_adj = adj_rows(5, n, dv, m, "variable node")
    cn_adj = adj_rows(5 + n, m, dc, n, "check node")
    # symmetry check here so the error can name the offending line
    cn_sets = [set(a) for a in cn_adj]
    for i, adj in enumerate(vn_adj):
        for j in adj:
            if i not in cn_sets[j]:
                raise ValueError("line %d: edge (%d,%d) missing from check side"
                                 % (5 + i, i + 1, j + 1))
    vn_sets = [set(a) for a in vn_adj]
    for j, adj in enumerate(cn_adj):
        for i in adj:
            if j not in vn_sets[i]:
                raise ValueError("line %d: edge (%d,%d) missing from variable side"
                                 % (5 + n + j, i + 1, j + 1))
    return TannerGraph(vn_adj, cn_adj)


def serialize_alist(graph):
    """Canonical alist text: unpadded adjacency rows, newline-terminated."""
    dv = graph.vn_degrees
    dc = graph.cn_degrees
    out = []
    out.append("%d %d" % (graph.n, graph.m))
    out.append("%d %d" % (dv.max(), dc.max()))
    out.append(" ".join(str(d) for d in dv))
    out.append(" ".join(str(d) for d in dc))
    for adj in graph.vn_adj:
        out.append(" ".join(str(j + 1) for j in adj))
    for adj in graph.cn_adj:
        out.append(" ".join(str(i + 1) for i in adj))
    return "\n".join(out) + "\n"


def load_alist(path):
    with open(path) as f:
        return parse_alist(f.read())


def save_alist(graph, path):
    with open(path, "w") as f:
        f.write(serialize_alist(graph))


def from_parity_matrix(H, punctured=None):
    """Graph from a dense 0/1 parity-check matrix (rows = checks)."""
    H = np.asarray(H)
    m, n = H.shape
    vn_adj = [list(np.nonzero(H[:, i])[0]) for i in range(n)]
    cn_adj = [list(np.nonzero(H[j, :])[0]) for j in range(m)]
    return TannerGraph(vn_adj, cn_adj, punctured=punctured)


def parity_matrix(graph):
    H = np.zeros((graph.m, graph.n), dtype=np.uint8)
    for j, adj in enumerate(graph.cn_adj):
        H[j, adj] = 1
    return H


def read_puncture_mask(text, n):
    """Whitespace-separated 0/1 tokens, one per variable node."""
    toks = text.split()
    if len(toks) != n:
        raise ValueError("puncture mask has %d entries, expected %d" % (len(toks), n))
    mask = np.zeros(n, dtype=bool)
    for i, t in enumerate(toks):
        if t == "1":
            mask[i] = True
        elif t != "0":
            raise ValueError("puncture mask entry %d is %r, expected 0 or 1" % (i, t))
    return mask


def write_puncture_mask(mask, path):
    with open(path, "w") as f:
        f.write(" ".join("1" if b else "0" for b in mask) + "\n")


def generate_regular_code(n, dv, dc, seed):
    """Random (dv,dc)-regular Tanner graph, deterministic for a fixed seed.

    Greedy placement, lowest-filled checks first, rejecting choices that close
    a 4-cycle when possible (girth >= 6 attempted, not guaranteed). Restarts
    with a fresh permutation if the greedy fill ever gets stuck.
    """
    if n < 1 or dv < 1 or dc < 2:
        raise ValueError("need n >= 1, dv >= 1, dc >= 2")
    if (n * dv) % dc != 0:
        raise ValueError("n*dv = %d not divisible by dc = %d" % (n * dv, dc))
    m = n * dv // dc
    if dv > m:
        raise ValueError("dv = %d exceeds check count m = %d" % (dv, m))
    rng = np.random.default_rng(seed)

    for _attempt in range(60):
        vn_adj = _try_fill(n, m, dv, dc, rng)
        if vn_adj is not None:
            cn_adj = [[] for _ in range(m)]
            for i, adj in enumerate(vn_adj):
                for j in adj:
                    cn_adj[j].append(i)
            return TannerGraph(vn_adj, cn_adj)
    raise ValueError("could not assemble a (%d,%d)-regular graph with n=%d" % (dv, dc, n))


def _try_fill(n, m, dv, dc, rng):
    cap = np.full(m, dc, dtype=np.int64)
    members = [set() for _ in range(m)]  # VNs attached to each check
    vn_adj = []
    order = rng.permutation(n)
    adj_of = [None] * n
    for i in order:
        chosen = []
        for _slot in range(dv):
            avail = np.nonzero(cap > 0)[0]
            avail = [j for j in avail if j not in chosen]
            if not avail:
                return None
            # fill emptiest checks first; rng breaks ties
            key = cap[avail] + rng.random(len(avail))
            cand = [avail[t] for t in np.argsort(-key)]
            pick = None
            for j in cand:
                if all(not (members[j] & members[jj]) for jj in chosen):
                    pick = j
                    break
            if pick is None:
                pick = cand[0]  # accept a 4-cycle rather than fail
            chosen.append(pick)
        for j in chosen:
            cap[j] -= 1
            members[j].add(i)
        adj_of[i] = sorted(chosen)
    for i in range(n):
        vn_adj.append(adj_of[i])
    return vn_adj


def count_4cycles(graph):
    """Number of VN pairs sharing >= 2 checks (0 means girth >= 6)."""
    H = parity_matrix(graph).astype(np.int64)
    overlap = H.T @ H
    np.fill_diagonal(overlap, 0)
    return int((overlap >= 2).sum()) // 2
