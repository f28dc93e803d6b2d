"""Linear-probability Bernoulli structural equation models.

Every node ``v`` is binary with

    P(v = 1 | parents) = phi + sum_p (p - 1/2) * delta[p -> v]

Roots are Ber(phi). The same equations drive forward sampling and exact
enumeration of the joint distribution.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

from . import graph as G
from .errors import ConfigError, InvalidSpec, TooLarge

BASE = "base"
EXOTIC1 = "exotic1"
EXOTIC2 = "exotic2"
EXOTIC3 = "exotic3"
VIOLATION = "violation"
HIGHDIM_U = "highdim_u"
GRAPH_IDS = (BASE, EXOTIC1, EXOTIC2, EXOTIC3, VIOLATION, HIGHDIM_U)

OBSERVED_NODES = ("X", "Y", "Z", "W")
MAX_DIMS = 24
HIGHDIM = 10

# (parent, child) per graph; the delta key is parent + child.
_BASE_EDGES = [("U", "W"), ("U", "Z"), ("U", "X"), ("Z", "X"), ("U", "Y"), ("W", "Y"), ("X", "Y")]
_EDGES = {
    BASE: _BASE_EDGES,
    EXOTIC1: [("U", "W"), ("U", "X"), ("U", "Z"), ("X", "Z"), ("U", "Y"), ("W", "Y"), ("X", "Y")],
    EXOTIC2: [("Us", "U"), ("Us", "W"), ("Us", "Y")] + _BASE_EDGES,
    EXOTIC3: [("U1", "U"), ("U", "U2"), ("U1", "Z"), ("U1", "X"), ("U2", "W"), ("U2", "Y")]
    + _BASE_EDGES,
    VIOLATION: _BASE_EDGES + [("W", "X")],
    HIGHDIM_U: _BASE_EDGES,
}
_NODE_ORDER = {
    BASE: ["U", "W", "Z", "X", "Y"],
    EXOTIC1: ["U", "W", "X", "Z", "Y"],
    EXOTIC2: ["Us", "U", "W", "Z", "X", "Y"],
    EXOTIC3: ["U1", "U", "U2", "W", "Z", "X", "Y"],
    VIOLATION: ["U", "W", "Z", "X", "Y"],
    HIGHDIM_U: ["U", "W", "Z", "X", "Y"],
}
_GRAPHS = {
    BASE: G.FIG1D,
    EXOTIC1: G.FIG2A,
    EXOTIC2: G.FIG2B,
    EXOTIC3: G.FIG2C,
    VIOLATION: G.FIG1D.with_edges(add=[("W", "X")]),
    HIGHDIM_U: G.FIG1D,
}
# edges out of the (vector) confounder in the high-dimensional model
U_VECTOR_KEYS = ("UW", "UZ", "UX", "UY")

DEFAULT_DELTAS = {
    "UW": 0.6, "UZ": 0.6, "UX": 0.2, "ZX": 0.2, "UY": 0.2, "WY": 0.2, "XY": 0.1,
    "XZ": 0.1,
    "UsU": 0.3, "UsW": 0.3, "UsY": 0.3,
    "U1U": 0.3, "UU2": 0.3, "U1Z": 0.3, "U1X": 0.3, "U2W": 0.3, "U2Y": 0.3,
    "WX": 0.0,
}


def edge_keys(graph_id: str) -> list[str]:
    return [p + c for p, c in _EDGES[graph_id]]


def u_columns(u_dims: int) -> list[str]:
    return ["U"] if u_dims == 1 else [f"U_{j}" for j in range(u_dims)]


@dataclass(frozen=True)
class DgpSpec:
    """A named structural model.

    ``deltas`` holds scalar edge strengths keyed ``parent + child`` (``"UW"``,
    ``"UsY"``...); missing edges contribute zero. ``delta_vectors`` carries
    the per-dimension strengths of the ``U -> .`` edges when ``u_dims > 1``.
    """

    graph_id: str = BASE
    phi: float = 0.5
    deltas: Mapping[str, float] = field(default_factory=dict)
    u_dims: int = 1
    delta_vectors: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "deltas", MappingProxyType({k: float(v) for k, v in self.deltas.items()}))
        object.__setattr__(self, "delta_vectors", MappingProxyType(
            {k: tuple(float(x) for x in v) for k, v in self.delta_vectors.items()}))

    def __hash__(self):
        return hash((self.graph_id, self.phi, tuple(sorted(self.deltas.items())),
                     self.u_dims, tuple(sorted(self.delta_vectors.items()))))

    def __eq__(self, other):
        if not isinstance(other, DgpSpec):
            return NotImplemented
        return (self.graph_id, self.phi, dict(self.deltas), self.u_dims, dict(self.delta_vectors)) == (
            other.graph_id, other.phi, dict(other.deltas), other.u_dims, dict(other.delta_vectors))

    def validate(self) -> None:
        if self.graph_id not in GRAPH_IDS:
            raise InvalidSpec(f"unknown graph id {self.graph_id!r}")
        if not 0.0 < self.phi < 1.0:
            raise InvalidSpec(f"phi must lie in (0, 1), got {self.phi}")
        if self.graph_id == HIGHDIM_U:
            if self.u_dims < 1:
                raise InvalidSpec("u_dims must be positive")
        elif self.u_dims != 1:
            raise InvalidSpec("u_dims must be 1 unless graph is highdim_u")
        allowed = set(edge_keys(self.graph_id))
        for key in self.deltas:
            if key not in allowed:
                raise InvalidSpec(f"delta {key!r} is not an edge of {self.graph_id}")
        for key, vec in self.delta_vectors.items():
            if self.graph_id != HIGHDIM_U or key not in U_VECTOR_KEYS:
                raise InvalidSpec(f"delta vector {key!r} not allowed for {self.graph_id}")
            if key in self.deltas:
                raise InvalidSpec(f"{key!r} given both as scalar and vector")
            if len(vec) != self.u_dims:
                raise InvalidSpec(f"delta vector {key!r} has length {len(vec)}, expected {self.u_dims}")
        for node, _, terms in self.equations():
            spread = sum(abs(d) for _, d in terms) / 2
            if self.phi - spread < -1e-12 or self.phi + spread > 1 + 1e-12:
                raise InvalidSpec(
                    f"Bernoulli argument of {node} can leave [0, 1]: "
                    f"range [{self.phi - spread:.3g}, {self.phi + spread:.3g}]")

    def equations(self) -> list[tuple[str, bool, list[tuple[str, float]]]]:
        """``(column, latent, [(parent column, delta), ...])`` in topological order."""
        ucols = u_columns(self.u_dims)
        latent = set(_GRAPHS[self.graph_id].latent)
        out = []
        for node in _NODE_ORDER[self.graph_id]:
            if node == "U" and self.graph_id == HIGHDIM_U:
                out.extend((c, True, []) for c in ucols)
                continue
            terms = []
            for parent, child in _EDGES[self.graph_id]:
                if child != node:
                    continue
                key = parent + child
                if parent == "U" and self.graph_id == HIGHDIM_U:
                    vec = self.delta_vectors.get(key)
                    if vec is None:
                        vec = (self.deltas.get(key, 0.0),) + (0.0,) * (self.u_dims - 1)
                    terms.extend((c, d) for c, d in zip(ucols, vec))
                else:
                    terms.append((parent, self.deltas.get(key, 0.0)))
            out.append((node, node in latent, terms))
        return out

    @property
    def graph(self) -> G.CausalGraph:
        return _GRAPHS[self.graph_id]

    def node_columns(self) -> dict[str, list[str]]:
        """Map each graph node to its data column(s)."""
        cols = {n: [n] for n in self.graph.nodes}
        if self.graph_id == HIGHDIM_U:
            cols["U"] = u_columns(self.u_dims)
        return cols

    def columns(self) -> list[str]:
        return [name for name, _, _ in self.equations()]

    def latent_columns(self) -> list[str]:
        return [name for name, lat, _ in self.equations() if lat]

    def with_deltas(self, **deltas) -> "DgpSpec":
        return replace(self, deltas={**self.deltas, **deltas})


def default_spec(graph_id: str = BASE, phi: float = 0.5, **overrides) -> DgpSpec:
    """Spec with fixture strengths on every edge of ``graph_id``."""
    if graph_id not in GRAPH_IDS:
        raise InvalidSpec(f"unknown graph id {graph_id!r}")
    deltas = {k: DEFAULT_DELTAS[k] for k in edge_keys(graph_id)}
    if graph_id == HIGHDIM_U:
        return highdim_spec("const", "const", phi=phi, **overrides)
    deltas.update(overrides)
    spec = DgpSpec(graph_id, phi, deltas)
    spec.validate()
    return spec


# --- high-dimensional confounder patterns -------------------------------------

HIGHDIM_PATTERNS = ("const", "linear", "first")
# base strengths per pattern, chosen so every Bernoulli argument stays in [0, 1]
HIGHDIM_BASE = {
    "UV": {"const": 0.25, "linear": 0.14, "first": 0.6},
    "UY": {"const": 0.2, "linear": 0.12, "first": 0.2},
}


def delta_pattern(kind: str, base: float, dims: int = HIGHDIM) -> tuple[float, ...]:
    """Per-dimension strengths.

    ``const``: base / sqrt(dims) in every dimension; ``linear``:
    base * (dims - j) / dims; ``first``: base in dimension 0, zero elsewhere.
    """
    if kind == "const":
        return tuple(base / math.sqrt(dims) for _ in range(dims))
    if kind == "linear":
        return tuple(base * (dims - j) / dims for j in range(dims))
    if kind == "first":
        return (base,) + (0.0,) * (dims - 1)
    raise InvalidSpec(f"unknown delta pattern {kind!r}")


def highdim_spec(uv: str = "const", uy: Optional[str] = None, phi: float = 0.5,
                 dims: int = HIGHDIM, uv_base: Optional[float] = None,
                 uy_base: Optional[float] = None, **overrides) -> DgpSpec:
    """High-dimensional confounder on the proxy graph.

    ``uv`` sets the shared pattern of the U -> W, Z, X edges, ``uy`` the
    pattern of U -> Y (defaults to ``uv``).
    """
    uy = uv if uy is None else uy
    uv_base = HIGHDIM_BASE["UV"][uv] if uv_base is None else uv_base
    uy_base = HIGHDIM_BASE["UY"][uy] if uy_base is None else uy_base
    vuv = delta_pattern(uv, uv_base, dims)
    vectors = {"UW": vuv, "UZ": vuv, "UX": vuv, "UY": delta_pattern(uy, uy_base, dims)}
    deltas = {k: DEFAULT_DELTAS[k] for k in ("ZX", "WY", "XY")}
    for k, v in overrides.items():
        if k in U_VECTOR_KEYS:
            vectors[k] = tuple(v) if isinstance(v, (list, tuple)) else (v,) + (0.0,) * (dims - 1)
        else:
            deltas[k] = v
    spec = DgpSpec(HIGHDIM_U, phi, deltas, dims, vectors)
    spec.validate()
    return spec


# --- datasets -------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """``n`` i.i.d. rows of binary values, one column per variable."""

    columns: tuple[str, ...]
    latent: frozenset[str]
    values: np.ndarray  # shape (n, len(columns)), uint8
    seed: object = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint8)
        if v.ndim != 2 or v.shape[1] != len(self.columns):
            raise ValueError("values must be an (n, n_columns) array")
        if v.size and v.max() > 1:
            raise ValueError("values must be binary")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "latent", frozenset(self.latent))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.n

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    @property
    def observed_columns(self) -> list[str]:
        return [c for c in self.columns if c not in self.latent]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["latent_" + c if c in self.latent else c for c in self.columns])
        writer.writerows(self.values.tolist())
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, is_text: bool = False) -> "Dataset":
        if is_text:
            text = path_or_text
        else:
            with open(path_or_text, newline="") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty CSV")
        header = rows[0]
        columns, latent = [], set()
        for h in header:
            if h.startswith("latent_"):
                h = h[len("latent_"):]
                latent.add(h)
            columns.append(h)
        values = np.array(rows[1:], dtype=np.uint8).reshape(len(rows) - 1, len(columns))
        return cls(tuple(columns), frozenset(latent), values)


def _bernoulli_args(terms, phi, cols: dict[str, np.ndarray], n: int) -> np.ndarray:
    arg = np.full(n, phi)
    for parent, d in terms:
        if d:
            arg += (cols[parent] - 0.5) * d
    return arg


def sample(spec: DgpSpec, n: int, seed) -> Dataset:
    """Forward-sample ``n`` rows; deterministic in ``(spec, n, seed)``.

    ``seed`` is anything accepted by ``numpy.random.default_rng`` (an int or
    a sequence of ints such as ``(master_seed, run_index)``).
    """
    spec.validate()
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    cols: dict[str, np.ndarray] = {}
    eqs = spec.equations()
    for name, _, terms in eqs:
        p = _bernoulli_args(terms, spec.phi, cols, n)
        cols[name] = (rng.random(n) < p).astype(np.uint8)
    names = tuple(name for name, _, _ in eqs)
    values = np.column_stack([cols[c] for c in names])
    return Dataset(names, frozenset(spec.latent_columns()), values, seed)


# --- exact enumeration ------------------------------------------------------------

@dataclass(frozen=True)
class JointTable:
    """Probability mass over all configurations of binary variables.

    ``probs`` has one axis of length 2 per entry of ``names``.
    """

    names: tuple[str, ...]
    probs: np.ndarray
    latent: frozenset[str] = frozenset()

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != len(self.names):
            raise ValueError("one axis per variable")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "latent", frozenset(self.latent))

    def marginal(self, keep: Sequence[str]) -> "JointTable":
        keep = list(keep)
        idx = [self.names.index(k) for k in keep]
        drop = tuple(i for i in range(len(self.names)) if i not in idx)
        p = self.probs.sum(axis=drop) if drop else self.probs
        remaining = [n for n in self.names if n in keep]
        p = np.moveaxis(p, [remaining.index(k) for k in keep], list(range(len(keep))))
        return JointTable(tuple(keep), p, self.latent & set(keep))

    def prob(self, **assignment) -> float:
        m = self.marginal(list(assignment))
        return float(m.probs[tuple(assignment[k] for k in m.names)])

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def observed(self) -> "JointTable":
        return self.marginal([n for n in self.names if n not in self.latent])


def _enumerate(spec: DgpSpec, do_x: Optional[int] = None) -> JointTable:
    spec.validate()
    eqs = spec.equations()
    k = len(eqs)
    if k > MAX_DIMS:
        raise TooLarge(f"{k} binary dimensions exceed the cap of {MAX_DIMS}")
    axis = {name: i for i, (name, _, _) in enumerate(eqs)}

    def along(i, values):
        shape = [1] * k
        shape[i] = 2
        return np.asarray(values, dtype=float).reshape(shape)

    joint = np.ones((1,) * k)
    for name, _, terms in eqs:
        i = axis[name]
        if name == "X" and do_x is not None:
            factor = along(i, [1.0 - do_x, float(do_x)])
        else:
            arg = np.full((1,) * k, spec.phi)
            for parent, d in terms:
                if d:
                    arg = arg + along(axis[parent], [-0.5 * d, 0.5 * d])
            factor = np.where(along(i, [0, 1]) == 1, arg, 1.0 - arg)
        joint = joint * factor
    joint = np.broadcast_to(joint, (2,) * k).copy()
    return JointTable(tuple(axis), joint, frozenset(spec.latent_columns()))


def exact_joint(spec: DgpSpec) -> JointTable:
    """Exact mass of every configuration of observed and latent variables."""
    return _enumerate(spec)


def observed_joint(spec: DgpSpec) -> JointTable:
    return _enumerate(spec).observed()


def do_distribution(spec: DgpSpec, x_val: int) -> float:
    """P(Y=1 | do(X=x_val)) in the mutilated model."""
    if x_val not in (0, 1):
        raise ValueError("x_val must be 0 or 1")
    return _enumerate(spec, do_x=x_val).prob(Y=1)


def true_ate(spec: DgpSpec) -> float:
    return do_distribution(spec, 1) - do_distribution(spec, 0)


# --- config files ------------------------------------------------------------------

def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    return cp


def spec_to_config(spec: DgpSpec) -> str:
    cp = _parser()
    cp["graph"] = {"id": spec.graph_id}
    if spec.u_dims != 1:
        cp["graph"]["u_dims"] = str(spec.u_dims)
    cp["phi"] = {"value": repr(spec.phi)}
    cp["deltas"] = {k: repr(v) for k, v in spec.deltas.items()}
    for k, vec in spec.delta_vectors.items():
        cp["deltas"][k] = ", ".join(repr(x) for x in vec)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}", f"not a number: {raw!r}") from None


def spec_from_parser(cp: configparser.ConfigParser) -> DgpSpec:
    if not cp.has_section("graph"):
        raise ConfigError("[graph]", "missing section")
    known = {"id", "u_dims", "pattern_uv", "pattern_uy"}
    for key in cp["graph"]:
        if key not in known:
            raise ConfigError(f"[graph] {key}", "unknown key")
    gid = cp["graph"].get("id", BASE).strip()
    if gid not in GRAPH_IDS:
        raise ConfigError("[graph] id", f"unknown graph id {gid!r}")
    phi = 0.5
    if cp.has_section("phi"):
        for key in cp["phi"]:
            if key != "value":
                raise ConfigError(f"[phi] {key}", "unknown key")
        phi = _float("phi", "value", cp["phi"].get("value", "0.5"))
    scalars, vectors = {}, {}
    if cp.has_section("deltas"):
        allowed = set(edge_keys(gid))
        for key, raw in cp["deltas"].items():
            if key not in allowed:
                raise ConfigError(f"[deltas] {key}", f"not an edge of {gid}")
            parts = [p for p in raw.split(",") if p.strip()]
            if len(parts) > 1:
                vectors[key] = tuple(_float("deltas", key, p) for p in parts)
            else:
                scalars[key] = _float("deltas", key, raw)
    try:
        if gid == HIGHDIM_U:
            raw_dims = cp["graph"].get("u_dims", str(HIGHDIM))
            try:
                dims = int(raw_dims)
            except ValueError:
                raise ConfigError("[graph] u_dims", f"not an integer: {raw_dims!r}") from None
            uv = cp["graph"].get("pattern_uv", "const")
            uy = cp["graph"].get("pattern_uy", uv)
            for key, val in (("pattern_uv", uv), ("pattern_uy", uy)):
                if val not in HIGHDIM_PATTERNS:
                    raise ConfigError(f"[graph] {key}", f"unknown pattern {val!r}")
            spec = highdim_spec(uv, uy, phi=phi, dims=dims, **scalars, **vectors)
        else:
            if vectors:
                raise ConfigError(f"[deltas] {next(iter(vectors))}", "vectors need graph highdim_u")
            if "u_dims" in cp["graph"] and cp["graph"]["u_dims"].strip() != "1":
                raise ConfigError("[graph] u_dims", "must be 1 unless graph is highdim_u")
            spec = default_spec(gid, phi=phi, **scalars)
    except InvalidSpec as exc:
        raise ConfigError("[deltas]", str(exc)) from None
    return spec


def spec_from_config(text: str) -> DgpSpec:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    return spec_from_parser(cp)


def load_spec(path) -> DgpSpec:
    with open(path) as fh:
        return spec_from_config(fh.read())
