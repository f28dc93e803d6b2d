"""Causal DAGs, d-separation and the graphical identification criteria.

Nodes are short string ids, each either observed or latent. Graphs are
immutable; every query is a pure function.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .errors import (
    CyclicGraph,
    GraphFormatError,
    InvalidLabeling,
    OverlappingSets,
    UnknownNode,
)

OBSERVED = "observed"
LATENT = "latent"


@dataclass(frozen=True, eq=False)
class CausalGraph:
    """A DAG whose nodes are tagged observed or latent.

    Equality ignores node order.
    """

    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    latent: frozenset[str] = frozenset()
    _parents: dict = field(init=False, repr=False, compare=False)
    _children: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphFormatError("duplicate node ids")
        if any(not n for n in nodes):
            raise GraphFormatError("empty node id")
        node_set = set(nodes)
        for n in self.latent:
            if n not in node_set:
                raise UnknownNode(n)
        parents = {n: set() for n in nodes}
        children = {n: set() for n in nodes}
        for a, b in self.edges:
            for n in (a, b):
                if n not in node_set:
                    raise UnknownNode(n)
            if a == b:
                raise CyclicGraph(f"self-loop on {a!r}")
            parents[b].add(a)
            children[a].add(b)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(self.edges))
        object.__setattr__(self, "latent", frozenset(self.latent))
        object.__setattr__(self, "_parents", {k: frozenset(v) for k, v in parents.items()})
        object.__setattr__(self, "_children", {k: frozenset(v) for k, v in children.items()})
        self.topological_order()  # raises on cycles

    def __eq__(self, other):
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return (set(self.nodes), self.edges, self.latent) == (set(other.nodes), other.edges, other.latent)

    def __hash__(self):
        return hash((frozenset(self.nodes), self.edges, self.latent))

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]], latent: Iterable[str] = (),
                   extra_nodes: Iterable[str] = ()) -> "CausalGraph":
        edges = list(edges)
        order: list[str] = []
        for n in [*extra_nodes, *(v for e in edges for v in e), *latent]:
            if n not in order:
                order.append(n)
        return cls(tuple(order), frozenset(edges), frozenset(latent))

    def _check(self, names: Iterable[str]) -> None:
        for n in names:
            if n not in self._parents:
                raise UnknownNode(n)

    def parents(self, node: str) -> frozenset[str]:
        self._check([node])
        return self._parents[node]

    def children(self, node: str) -> frozenset[str]:
        self._check([node])
        return self._children[node]

    def is_latent(self, node: str) -> bool:
        self._check([node])
        return node in self.latent

    def descendants(self, node: str) -> set[str]:
        """Strict descendants of ``node``."""
        self._check([node])
        seen: set[str] = set()
        stack = list(self._children[node])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self._children[n])
        return seen

    def ancestors(self, nodes: Iterable[str]) -> set[str]:
        """``nodes`` together with all their ancestors."""
        nodes = list(nodes)
        self._check(nodes)
        seen = set(nodes)
        stack = list(nodes)
        while stack:
            for p in self._parents[stack.pop()]:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def topological_order(self) -> list[str]:
        indeg = {n: len(self._parents[n]) for n in self.nodes}
        queue = deque(n for n in self.nodes if indeg[n] == 0)
        order = []
        while queue:
            n = queue.popleft()
            order.append(n)
            for c in sorted(self._children[n], key=self.nodes.index):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != len(self.nodes):
            raise CyclicGraph("graph contains a directed cycle")
        return order

    def with_edges(self, add=(), remove=()) -> "CausalGraph":
        edges = (set(self.edges) | set(add)) - set(remove)
        extra = [n for e in add for n in e if n not in self.nodes]
        return CausalGraph(self.nodes + tuple(dict.fromkeys(extra)), frozenset(edges), self.latent)

    # --- text exchange format -------------------------------------------------

    def to_text(self) -> str:
        lines = []
        if self.latent:
            lines.append("latent: " + ", ".join(n for n in self.nodes if n in self.latent))
        isolated = [n for n in self.nodes if not self._parents[n] and not self._children[n]
                    and n not in self.latent]
        if isolated:
            lines.append("observed: " + ", ".join(isolated))
        key = self.nodes.index
        for a, b in sorted(self.edges, key=lambda e: (key(e[0]), key(e[1]))):
            lines.append(f"{a} -> {b}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CausalGraph":
        latent: list[str] = []
        extra: list[str] = []
        edges: list[tuple[str, str]] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "->" in line:
                parts = [p.strip() for p in line.split("->")]
                if len(parts) != 2 or not all(parts):
                    raise GraphFormatError(f"line {lineno}: expected 'parent -> child'")
                edges.append((parts[0], parts[1]))
            elif ":" in line:
                head, _, rest = line.partition(":")
                names = [n.strip() for n in rest.split(",") if n.strip()]
                head = head.strip().lower()
                if head == "latent":
                    latent.extend(names)
                elif head == "observed":
                    extra.extend(names)
                else:
                    raise GraphFormatError(f"line {lineno}: unknown header {head!r}")
            else:
                raise GraphFormatError(f"line {lineno}: cannot parse {raw!r}")
        if len(set(edges)) != len(edges):
            raise GraphFormatError("duplicate edge")
        return cls.from_edges(edges, latent=latent, extra_nodes=extra)


def _as_set(g: CausalGraph, nodes) -> frozenset[str]:
    if isinstance(nodes, str):
        nodes = [nodes]
    s = frozenset(nodes)
    g._check(s)
    return s


def _disjoint(*sets) -> None:
    for i, a in enumerate(sets):
        for b in sets[i + 1:]:
            if a & b:
                raise OverlappingSets(f"sets overlap on {sorted(a & b)}")


def d_separated(g: CausalGraph, a, b, c=()) -> bool:
    """True iff ``c`` blocks every path between ``a`` and ``b``.

    Reachability over (node, direction) states: a trail may pass a
    non-collider only outside ``c`` and a collider only if the collider is an
    ancestor of (or in) ``c``.
    """
    a, b, c = _as_set(g, a), _as_set(g, b), _as_set(g, c)
    _disjoint(a, b, c)
    return not (_reachable(g, a, c) & b)


def _reachable(g: CausalGraph, sources: frozenset[str], c: frozenset[str]) -> set[str]:
    anc_c = g.ancestors(c)
    # "up": arrived from a child (or start); "down": arrived from a parent
    queue = deque((s, "up") for s in sources)
    visited: set[tuple[str, str]] = set()
    reached: set[str] = set()
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in c:
            reached.add(node)
        if direction == "up":
            if node in c:
                continue
            queue.extend((p, "up") for p in g._parents[node])
            queue.extend((ch, "down") for ch in g._children[node])
        else:
            if node not in c:
                queue.extend((ch, "down") for ch in g._children[node])
            if node in anc_c:
                queue.extend((p, "up") for p in g._parents[node])
    return reached


def path_is_active(g: CausalGraph, path: list[str], c: frozenset[str]) -> bool:
    for i in range(1, len(path) - 1):
        prev, node, nxt = path[i - 1], path[i], path[i + 1]
        collider = node in g._children[prev] and node in g._children[nxt]
        if collider:
            if node not in c and not (g.descendants(node) & c):
                return False
        elif node in c:
            return False
    return True


def _simple_paths(g: CausalGraph, start: str, targets: frozenset[str]) -> Iterator[list[str]]:
    stack = [(start, [start])]
    while stack:
        node, path = stack.pop()
        if node in targets and len(path) > 1:
            yield path
            continue
        for nb in sorted(g._parents[node] | g._children[node], reverse=True):
            if nb not in path:
                stack.append((nb, path + [nb]))


def active_path(g: CausalGraph, a, b, c=()) -> Optional[list[str]]:
    """Shortest unblocked path from ``a`` to ``b`` given ``c``, or None."""
    a, b, c = _as_set(g, a), _as_set(g, b), _as_set(g, c)
    _disjoint(a, b, c)
    best = None
    for s in sorted(a):
        for p in _simple_paths(g, s, b):
            if any(n in a for n in p[1:]):
                continue
            if path_is_active(g, p, c) and (best is None or len(p) < len(best)):
                best = p
    return best


def format_path(g: CausalGraph, path: list[str]) -> str:
    out = path[0]
    for prev, nxt in zip(path, path[1:]):
        out += f" -> {nxt}" if nxt in g._children[prev] else f" <- {nxt}"
    return out


def is_backdoor_admissible(g: CausalGraph, adj, x: str, y: str) -> bool:
    """Backdoor criterion: no member of ``adj`` descends from ``x`` and
    ``adj`` blocks every path from ``x`` to ``y`` that starts with an arrow
    into ``x``."""
    adj = _as_set(g, adj)
    g._check([x, y])
    if x in adj or y in adj:
        raise OverlappingSets("adjustment set must exclude x and y")
    if adj & g.descendants(x):
        return False
    cut = g.with_edges(remove=[(x, ch) for ch in g._children[x]])
    return d_separated(cut, {x}, {y}, adj)


# --- role labelings and criteria reports --------------------------------------

@dataclass(frozen=True)
class RoleLabeling:
    x: str = "X"
    y: str = "Y"
    z: str = "Z"
    w: str = "W"
    u: str = "U"

    def validate(self, g: CausalGraph) -> None:
        ids = [self.x, self.y, self.z, self.w, self.u]
        if len(set(ids)) != 5:
            raise InvalidLabeling("roles must be five distinct nodes")
        g._check(ids)
        for role in ("x", "y", "z", "w"):
            if g.is_latent(getattr(self, role)):
                raise InvalidLabeling(f"{role} must be observed")
        if not g.is_latent(self.u):
            raise InvalidLabeling("u must be latent")


CANONICAL = RoleLabeling()

HOLDS = "holds"
FAILS = "fails"
VACUOUS = "vacuous"


@dataclass(frozen=True)
class Criterion:
    name: str
    status: str
    witness: Optional[str] = None

    def __post_init__(self):
        if (self.status == FAILS) != (self.witness is not None):
            raise ValueError("failing entries carry a witness, passing entries never do")

    @property
    def holds(self) -> bool:
        return self.status != FAILS


@dataclass(frozen=True)
class CriteriaReport:
    entries: tuple[Criterion, ...]

    @property
    def all_hold(self) -> bool:
        return all(e.holds for e in self.entries)

    def __getitem__(self, name: str) -> Criterion:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def format(self) -> str:
        lines = []
        for e in self.entries:
            line = f"{e.name}: {e.status}"
            if e.witness:
                line += f"  [{e.witness}]"
            lines.append(line)
        return "\n".join(lines)


def _indep(g: CausalGraph, name: str, a, b, c) -> Criterion:
    if d_separated(g, a, b, c):
        return Criterion(name, HOLDS)
    path = active_path(g, a, b, c)
    return Criterion(name, FAILS, format_path(g, path))


def surrogate_parents(g: CausalGraph, r: RoleLabeling = CANONICAL) -> frozenset[str]:
    """Parents of the treatment other than the designated confounder."""
    r.validate(g)
    return g.parents(r.x) - {r.u}


def check_equivalence_class(g: CausalGraph, r: RoleLabeling = CANONICAL) -> CriteriaReport:
    r.validate(g)
    t = surrogate_parents(g, r)
    entries = [
        _indep(g, "(i) W _||_ (Z,X) | U", {r.w}, {r.z, r.x}, {r.u}),
        _indep(g, "(ii) Z _||_ Y | (U,X)", {r.z}, {r.y}, {r.u, r.x}),
    ]
    name3 = "(iii) T _||_ Y | (U,X)"
    if not t:
        entries.append(Criterion(name3, HOLDS))
    elif t & {r.y}:
        entries.append(Criterion(name3, FAILS, f"{r.y} is a parent of {r.x}"))
    else:
        entries.append(_indep(g, name3, t, {r.y}, {r.u, r.x}))
    name4 = "(iv) X _||_ U | T"
    if r.u in g.parents(r.x):
        entries.append(Criterion(name4, VACUOUS))
    else:
        entries.append(_indep(g, name4, {r.x}, {r.u}, t))
    return CriteriaReport(tuple(entries))


def check_miao_conditions(g: CausalGraph, r: RoleLabeling = CANONICAL, levels=None) -> CriteriaReport:
    """Conditions 1-3 of the original proximal identification result.

    ``levels`` maps node id to number of levels; missing ids default to 2.
    Condition 4 (matrix rank) depends on data; see ``estimators``.
    """
    r.validate(g)
    levels = dict(levels or {})
    lz, lw, lu = (levels.get(n, 2) for n in (r.z, r.w, r.u))
    entries = []
    if lz == lw == lu:
        entries.append(Criterion("1 cardinalities", HOLDS))
    else:
        entries.append(Criterion("1 cardinalities", FAILS, f"|Z|={lz}, |W|={lw}, |U|={lu}"))
    name2 = "2 backdoor"
    if is_backdoor_admissible(g, {r.u}, r.x, r.y):
        entries.append(Criterion(name2, HOLDS))
    else:
        bad = g.descendants(r.x) & {r.u}
        if bad:
            witness = f"{r.u} is a descendant of {r.x}"
        else:
            cut = g.with_edges(remove=[(r.x, ch) for ch in g.children(r.x)])
            witness = format_path(cut, active_path(cut, {r.x}, {r.y}, {r.u}))
        entries.append(Criterion(name2, FAILS, witness))
    entries.append(_indep(g, "3(i) W _||_ (Z,X) | U", {r.w}, {r.z, r.x}, {r.u}))
    entries.append(_indep(g, "3(ii) Z _||_ Y | (U,X)", {r.z}, {r.y}, {r.u, r.x}))
    return CriteriaReport(tuple(entries))


# --- the figures --------------------------------------------------------------

FIG1A = CausalGraph.from_edges([("X", "Y"), ("U", "X"), ("U", "Y")], latent=["U"])
FIG1B = CausalGraph.from_edges([("Z", "X"), ("X", "Y"), ("U", "X"), ("U", "Y")], latent=["U"])
FIG1C = CausalGraph.from_edges([("X", "Y"), ("U", "X"), ("U", "Z"), ("Z", "Y")], latent=["U"])
FIG1D = CausalGraph.from_edges(
    [("X", "Y"), ("U", "X"), ("U", "Y"), ("U", "W"), ("U", "Z"), ("W", "Y"), ("Z", "X")],
    latent=["U"],
)
FIG2A = CausalGraph.from_edges(
    [("X", "Y"), ("U", "X"), ("U", "Y"), ("U", "W"), ("U", "Z"), ("W", "Y"), ("X", "Z")],
    latent=["U"],
)
FIG2B = CausalGraph.from_edges(
    [("X", "Y"), ("U", "X"), ("Us", "U"), ("Us", "W"), ("Us", "Y"), ("U", "Y"), ("U", "W"),
     ("U", "Z"), ("W", "Y"), ("Z", "X")],
    latent=["U", "Us"],
)
FIG2C = CausalGraph.from_edges(
    [("X", "Y"), ("U1", "U"), ("U", "U2"), ("U2", "W"), ("U2", "Y"), ("U1", "Z"), ("U1", "X"),
     ("W", "Y"), ("Z", "X"), ("U", "X"), ("U", "Y"), ("U", "W"), ("U", "Z")],
    latent=["U", "U1", "U2"],
)

FIGURES = {
    "fig1a": FIG1A,
    "fig1b": FIG1B,
    "fig1c": FIG1C,
    "fig1d": FIG1D,
    "fig2a": FIG2A,
    "fig2b": FIG2B,
    "fig2c": FIG2C,
}
