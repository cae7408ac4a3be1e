"""Graphs, tree decompositions, and the centroid decomposition tree.

The centroid tree recursively splits a tree decomposition at a (vertex-
weighted) centroid bag A into sides P and Q with |P|,|Q| <= 2|R|/3 and no
graph edge between them; a preorder traversal of its groups is the variable
ordering used by the preconditioner.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedVertexSubtree, EdgeUncovered


class Graph:
    """Undirected simple graph on vertices 0..n-1."""

    def __init__(self, n: int, edges=()):
        self.n = int(n)
        self._adj = [set() for _ in range(self.n)]
        self._edges = set()
        for u, v in edges:
            self.add_edge(u, v)

    def add_edge(self, u: int, v: int):
        u, v = int(u), int(v)
        if u == v:
            raise ValueError("self-loops are not allowed")
        if not (0 <= u < self.n and 0 <= v < self.n):
            raise ValueError(f"edge ({u},{v}) out of range")
        if u > v:
            u, v = v, u
        if (u, v) not in self._edges:
            self._edges.add((u, v))
            self._adj[u].add(v)
            self._adj[v].add(u)

    @property
    def edges(self):
        return sorted(self._edges)

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def has_edge(self, u: int, v: int) -> bool:
        if u > v:
            u, v = v, u
        return (u, v) in self._edges

    def neighbors(self, v: int):
        return self._adj[v]

    def max_degree(self) -> int:
        return max((len(a) for a in self._adj), default=0)

    def components(self):
        seen = [False] * self.n
        comps = []
        for s in range(self.n):
            if seen[s]:
                continue
            stack, comp = [s], []
            seen[s] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in self._adj[v]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def copy(self) -> "Graph":
        return Graph(self.n, self._edges)

    # -- stock constructions -------------------------------------------

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, [(i, i + 1) for i in range(n - 1)])

    @classmethod
    def cycle(cls, n: int) -> "Graph":
        g = cls.path(n)
        if n > 2:
            g.add_edge(0, n - 1)
        return g

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def grid(cls, rows: int, cols: int) -> "Graph":
        def vid(i, j):
            return i * cols + j
        g = cls(rows * cols)
        for i in range(rows):
            for j in range(cols):
                if i + 1 < rows:
                    g.add_edge(vid(i, j), vid(i + 1, j))
                if j + 1 < cols:
                    g.add_edge(vid(i, j), vid(i, j + 1))
        return g

    @classmethod
    def simplicized_grid(cls, side: int) -> "Graph":
        """side x side grid with the up/right diagonal added in every cell:
        each cell's bottom-left vertex is joined to its top-right vertex."""
        def vid(i, j):
            return i * side + j
        g = cls.grid(side, side)
        for i in range(side - 1):
            for j in range(side - 1):
                g.add_edge(vid(i + 1, j), vid(i, j + 1))
        return g

    @classmethod
    def random_tree(cls, n: int, rng: np.random.Generator) -> "Graph":
        g = cls(n)
        for v in range(1, n):
            g.add_edge(v, int(rng.integers(0, v)))
        return g

    # -- text format: "n" then "u v" edge lines ------------------------

    def save(self, path):
        with open(path, "w") as f:
            f.write(f"{self.n}\n")
            for u, v in self.edges:
                f.write(f"{u} {v}\n")

    @classmethod
    def load(cls, path) -> "Graph":
        with open(path) as f:
            n = int(f.readline())
            g = cls(n)
            for line in f:
                parts = line.split()
                if parts:
                    g.add_edge(int(parts[0]), int(parts[1]))
        return g


class TreeDecomposition:
    """Bags over a tree; bag ids are arbitrary ints, vertices 0-indexed."""

    def __init__(self, bags: dict, tree_edges=()):
        self.bags = {int(b): frozenset(int(v) for v in vs) for b, vs in bags.items()}
        self.tree = {b: set() for b in self.bags}
        for a, b in tree_edges:
            self.add_tree_edge(a, b)

    def add_tree_edge(self, a: int, b: int):
        if a not in self.bags or b not in self.bags:
            raise ValueError(f"tree edge ({a},{b}) references unknown bag")
        self.tree[a].add(b)
        self.tree[b].add(a)

    @property
    def width(self) -> int:
        return max(len(b) for b in self.bags.values()) - 1

    def is_tree(self) -> bool:
        ids = list(self.bags)
        if not ids:
            return True
        n_edges = sum(len(s) for s in self.tree.values()) // 2
        if n_edges != len(ids) - 1:
            return False
        seen = {ids[0]}
        stack = [ids[0]]
        while stack:
            b = stack.pop()
            for c in self.tree[b]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return len(seen) == len(ids)

    # -- PACE-2017-style file format (vertices 1-based on disk) --------

    def save(self, path, n_vertices: int):
        ids = sorted(self.bags)
        remap = {b: i + 1 for i, b in enumerate(ids)}
        with open(path, "w") as f:
            f.write(f"s td {len(ids)} {self.width + 1} {n_vertices}\n")
            for b in ids:
                verts = " ".join(str(v + 1) for v in sorted(self.bags[b]))
                f.write(f"b {remap[b]} {verts}\n".rstrip() + "\n")
            for b in ids:
                for c in sorted(self.tree[b]):
                    if remap[b] < remap[c]:
                        f.write(f"{remap[b]} {remap[c]}\n")

    @classmethod
    def load(cls, path) -> "TreeDecomposition":
        bags, edges = {}, []
        with open(path) as f:
            for line in f:
                parts = line.split()
                if not parts or parts[0] == "c":
                    continue
                if parts[0] == "s":
                    continue
                if parts[0] == "b":
                    bags[int(parts[1]) - 1] = [int(v) - 1 for v in parts[2:]]
                else:
                    edges.append((int(parts[0]) - 1, int(parts[1]) - 1))
        return cls(bags, edges)


def validate_tree_decomposition(g: Graph, td: TreeDecomposition) -> int:
    """Check the three decomposition axioms and return the width.

    Raises EdgeUncovered / DisconnectedVertexSubtree on violations.
    """
    if not td.is_tree():
        raise ValueError("bag graph is not a tree")
    bag_of = [[] for _ in range(g.n)]
    for b, verts in td.bags.items():
        for v in verts:
            if not 0 <= v < g.n:
                raise ValueError(f"bag {b} mentions out-of-range vertex {v}")
            bag_of[v].append(b)
    for u, v in g.edges:
        if not any(v in td.bags[b] for b in bag_of[u]):
            raise EdgeUncovered((u, v))
    for v in range(g.n):
        bags_v = set(bag_of[v])
        if not bags_v:
            raise DisconnectedVertexSubtree(v)
        start = next(iter(bags_v))
        seen = {start}
        stack = [start]
        while stack:
            b = stack.pop()
            for c in td.tree[b]:
                if c in bags_v and c not in seen:
                    seen.add(c)
                    stack.append(c)
        if seen != bags_v:
            raise DisconnectedVertexSubtree(v)
    return td.width


def _fill_count(adj, v) -> int:
    nb = sorted(adj[v])
    fill = 0
    for i, x in enumerate(nb):
        for y in nb[i + 1:]:
            if y not in adj[x]:
                fill += 1
    return fill


def min_fill_tree_decomposition(g: Graph) -> TreeDecomposition:
    """Greedy minimum-fill elimination ordering turned into a clique tree.

    Exact on chordal inputs (a zero-fill vertex always exists there), so in
    particular width 1 on trees.  Fill counts are maintained incrementally
    with a lazily-invalidated heap; ties break toward the smaller vertex id.
    """
    import heapq

    adj = [set(g.neighbors(v)) for v in range(g.n)]
    alive = set(range(g.n))
    fill = [_fill_count(adj, v) for v in range(g.n)]
    heap = [(fill[v], v) for v in range(g.n)]
    heapq.heapify(heap)
    order = []
    bag_contents = []
    while alive:
        while True:
            f, v = heapq.heappop(heap)
            if v in alive and f == fill[v]:
                break
        nb = sorted(adj[v])
        bag_contents.append(frozenset([v] + nb))
        order.append(v)
        for i, x in enumerate(nb):
            for y in nb[i + 1:]:
                if y not in adj[x]:
                    adj[x].add(y)
                    adj[y].add(x)
        for x in nb:
            adj[x].discard(v)
        adj[v] = set()
        alive.discard(v)
        # Only vertices within distance 2 of v can change fill value.
        touched = set(nb)
        for x in nb:
            touched.update(adj[x])
        touched &= alive
        for x in touched:
            fill[x] = _fill_count(adj, x)
            heapq.heappush(heap, (fill[x], x))

    # Clique-tree: bag i hangs off the bag of the earliest-later-eliminated
    # vertex among bag i's other members.
    elim_pos = {v: i for i, v in enumerate(order)}
    bags = {i: bag_contents[i] for i in range(len(order))}
    edges = []
    for i, v in enumerate(order):
        later = [elim_pos[u] for u in bag_contents[i] if u != v]
        if later:
            edges.append((i, min(later)))
    td = TreeDecomposition(bags, edges)
    # Components of g produce separate clique trees; string them together.
    ids = sorted(td.bags)
    comp_of = {}
    for b in ids:
        if b in comp_of:
            continue
        stack = [b]
        comp_of[b] = b
        while stack:
            x = stack.pop()
            for y in td.tree[x]:
                if y not in comp_of:
                    comp_of[y] = b
                    stack.append(y)
    roots = sorted(set(comp_of.values()))
    for a, b in zip(roots, roots[1:]):
        td.add_tree_edge(a, b)
    return td


# ----------------------------------------------------------------------
# Centroid decomposition
# ----------------------------------------------------------------------

@dataclass
class CentroidNode:
    node_id: int
    group: tuple            # vertices eliminated at this node, ascending
    parent: int             # -1 at the root
    left: int = -1          # child handling the P side
    right: int = -1         # child handling the Q side


@dataclass
class CentroidTree:
    """Binary separator tree; node 0 is the root and ids are preorder."""

    n: int
    nodes: list = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> CentroidNode:
        return self.nodes[0]

    def depth(self) -> int:
        if not self.nodes:
            return 0
        depths = {0: 1}
        best = 1
        for node in self.nodes[1:]:
            depths[node.node_id] = depths[node.parent] + 1
            best = max(best, depths[node.node_id])
        return best

    def node_of_vertex(self) -> np.ndarray:
        owner = np.full(self.n, -1, dtype=np.int64)
        for node in self.nodes:
            for v in node.group:
                owner[v] = node.node_id
        return owner

    def preorder_vertices(self) -> list:
        out = []
        for node in self.nodes:      # node ids are already preorder
            out.extend(node.group)
        return out

    def permutation(self) -> np.ndarray:
        """perm[original_index] = position in the preorder ordering."""
        perm = np.empty(self.n, dtype=np.int64)
        for pos, v in enumerate(self.preorder_vertices()):
            perm[v] = pos
        return perm

    def ancestors(self, node_id: int):
        out = []
        while node_id != -1:
            out.append(node_id)
            node_id = self.nodes[node_id].parent
        return out

    def subtree_vertices(self, node_id: int) -> set:
        out = set()
        stack = [node_id]
        while stack:
            i = stack.pop()
            node = self.nodes[i]
            out.update(node.group)
            for c in (node.left, node.right):
                if c != -1:
                    stack.append(c)
        return out

    def to_json(self) -> str:
        payload = {
            "n": self.n,
            "nodes": [
                {"node_id": nd.node_id, "parent": nd.parent, "left": nd.left,
                 "right": nd.right, "group": list(nd.group)}
                for nd in self.nodes
            ],
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CentroidTree":
        payload = json.loads(text)
        nodes = [
            CentroidNode(d["node_id"], tuple(d["group"]), d["parent"], d["left"], d["right"])
            for d in payload["nodes"]
        ]
        nodes.sort(key=lambda nd: nd.node_id)
        return cls(payload["n"], nodes)


class _DecompositionState:
    """Mutable view of a tree decomposition during centroid recursion."""

    def __init__(self, td: TreeDecomposition, restrict=None):
        keep = None if restrict is None else set(restrict)
        self.content = {
            b: set(v for v in vs if keep is None or v in keep)
            for b, vs in td.bags.items()
        }
        self.adj = {b: set(td.tree[b]) for b in td.bags}
        self.alive = set(td.bags)

    def vertices(self) -> set:
        out = set()
        for b in self.alive:
            out.update(self.content[b])
        return out

    def weights(self) -> dict:
        # Each vertex counts toward exactly one alive bag (its smallest id),
        # so bag weights sum to the number of remaining vertices.
        owner = {}
        for b in sorted(self.alive):
            for v in self.content[b]:
                if v not in owner:
                    owner[v] = b
        w = {b: 0 for b in self.alive}
        for v, b in owner.items():
            w[b] += 1
        return w

    def component_of(self, start: int) -> list:
        seen = {start}
        stack = [start]
        while stack:
            b = stack.pop()
            for c in self.adj[b]:
                if c in self.alive and c not in seen:
                    seen.add(c)
                    stack.append(c)
        return sorted(seen)

    def forest_components(self) -> list:
        remaining = set(self.alive)
        comps = []
        while remaining:
            comp = self.component_of(min(remaining))
            comps.append(comp)
            remaining.difference_update(comp)
        return comps

    def weighted_centroid(self) -> int:
        """Centroid of the heaviest forest component: a bag whose removal
        leaves components of weight <= (total weight)/2.  Ties go to the
        smallest bag id."""
        w = self.weights()
        comps = self.forest_components()
        comps.sort(key=lambda comp: (-sum(w[b] for b in comp), comp[0]))
        comp = comps[0]
        comp_set = set(comp)
        total = sum(w[b] for b in comp)
        # For every bag, the largest weight among the pieces left by its removal.
        best_bag, best_cost = None, None
        for b in comp:
            pieces = []
            seen = {b}
            for c in self.adj[b]:
                if c in comp_set and c not in seen:
                    piece = 0
                    stack = [c]
                    seen.add(c)
                    while stack:
                        x = stack.pop()
                        piece += w[x]
                        for y in self.adj[x]:
                            if y in comp_set and y not in seen:
                                seen.add(y)
                                stack.append(y)
                    pieces.append(piece)
            cost = max(pieces, default=0)
            if best_cost is None or cost < best_cost or (cost == best_cost and b < best_bag):
                best_bag, best_cost = b, cost
        assert best_cost <= total / 2 + 1e-9
        return best_bag

    def remove_bag(self, b: int):
        self.alive.discard(b)

    def eliminate(self, vertices):
        vs = set(vertices)
        for b in self.alive:
            self.content[b] -= vs

    def restricted_to(self, bag_ids) -> "_DecompositionState":
        sub = object.__new__(_DecompositionState)
        sub.content = self.content
        sub.adj = self.adj
        sub.alive = set(bag_ids)
        return sub


def _split_state(state: _DecompositionState):
    """One centroid split: returns (A, P_state, Q_state, P_verts, Q_verts).

    A is the centroid bag's surviving vertices; the remaining forest
    components are packed greedily into two sides of weight <= 2|R|/3.
    """
    r_size = len(state.vertices())
    while True:
        c = state.weighted_centroid()
        a = sorted(state.content[c])
        state.remove_bag(c)
        if a or not state.alive:
            break
        # Empty centroid bag: drop it and look again.
    state.eliminate(a)

    comps = state.forest_components()
    w = state.weights()
    weights = [sum(w[b] for b in comp) for comp in comps]
    order = sorted(range(len(comps)), key=lambda i: (-weights[i], comps[i][0] if comps[i] else -1))
    side_bags = ([], [])
    side_weight = [0, 0]
    if order and weights[order[0]] * 3 >= sum(weights):
        # A single dominant component goes alone; everything else opposes it.
        side_bags[0].extend(comps[order[0]])
        side_weight[0] = weights[order[0]]
        for i in order[1:]:
            side_bags[1].extend(comps[i])
            side_weight[1] += weights[i]
    else:
        for i in order:
            s = 0 if side_weight[0] <= side_weight[1] else 1
            side_bags[s].extend(comps[i])
            side_weight[s] += weights[i]

    p_state = state.restricted_to(side_bags[0])
    q_state = state.restricted_to(side_bags[1])
    p_verts, q_verts = p_state.vertices(), q_state.vertices()
    limit = 2 * r_size / 3 + 1e-9
    assert len(p_verts) <= limit and len(q_verts) <= limit
    return a, p_state, q_state, p_verts, q_verts


def centroid_split(g: Graph, td: TreeDecomposition, restrict=None):
    """Single split of td (restricted to the given vertex set) into (A, P, Q)."""
    validate_tree_decomposition(g, td)
    state = _DecompositionState(td, restrict)
    if not state.vertices():
        return [], set(), set()
    a, _, _, p, q = _split_state(state)
    return a, p, q


def build_centroid_tree(g: Graph, td: TreeDecomposition) -> CentroidTree:
    """Recursive centroid decomposition of a validated tree decomposition."""
    validate_tree_decomposition(g, td)
    tree = CentroidTree(g.n)

    def recurse(state: _DecompositionState, parent: int) -> int:
        if not state.vertices():
            return -1
        a, p_state, q_state, p_verts, q_verts = _split_state(state)
        node_id = len(tree.nodes)
        node = CentroidNode(node_id, tuple(a), parent)
        tree.nodes.append(node)
        if p_verts:
            node.left = recurse(p_state, node_id)
        if q_verts:
            node.right = recurse(q_state, node_id)
        return node_id

    recurse(_DecompositionState(td), -1)
    if g.n:
        owner = tree.node_of_vertex()
        assert (owner >= 0).all(), "groups must partition the vertex set"
    return tree


def centroid_tree_for_graph(g: Graph) -> CentroidTree:
    """Convenience: min-fill decomposition followed by centroid splitting."""
    return build_centroid_tree(g, min_fill_tree_decomposition(g))
