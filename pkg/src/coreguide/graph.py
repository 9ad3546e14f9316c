"""Graph encodings of CNF formulas.

Node indices here are 0-based: node ``v - 1`` is literal ``+v`` and node
``n + v - 1`` is literal ``-v``.  The text dump written by :func:`dump_wlig`
uses the 1-based convention of :func:`coreguide.cnf.lit_node_index`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cnf import Cnf


class EdgelessGraph(ValueError):
    """The adjacency has no edges, so global-sum normalization is undefined."""


def _lit_nodes(lits: np.ndarray, n: int) -> np.ndarray:
    return np.where(lits > 0, lits - 1, n - lits - 1)


@dataclass(frozen=True)
class Wlig:
    n_vars: int
    indptr: np.ndarray  # int32, length N + 1
    indices: np.ndarray  # int32
    weights: np.ndarray  # int64
    degrees: np.ndarray  # weighted degree per node
    lit_types: np.ndarray  # +1 / -1 per node

    @property
    def num_nodes(self) -> int:
        return 2 * self.n_vars

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def matrix(self) -> sp.csr_matrix:
        N = self.num_nodes
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(N, N))

    def weight(self, i: int, j: int) -> int:
        """Weight between 0-based nodes ``i`` and ``j``."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        k = np.searchsorted(self.indices[lo:hi], j)
        if k < hi - lo and self.indices[lo + k] == j:
            return int(self.weights[lo + k])
        return 0

    def simple_degrees(self) -> np.ndarray:
        return np.diff(self.indptr).astype(np.int64)


def _pairs(cnf: Cnf) -> tuple[np.ndarray, np.ndarray]:
    """Node pairs (both orientations) for every co-occurrence of two literals in a clause."""
    n = cnf.num_vars
    by_len: dict[int, list[tuple[int, ...]]] = {}
    for c in cnf.clauses:
        if len(c) > 1:
            by_len.setdefault(len(c), []).append(c)
    rows, cols = [], []
    for k, group in by_len.items():
        nodes = _lit_nodes(np.asarray(group, dtype=np.int64), n)
        a, b = np.triu_indices(k, 1)
        r, c = nodes[:, a].ravel(), nodes[:, b].ravel()
        rows += [r, c]
        cols += [c, r]
    if not rows:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def build_wlig(cnf: Cnf) -> Wlig:
    n = cnf.num_vars
    N = 2 * n
    rows, cols = _pairs(cnf)
    A = sp.coo_matrix((np.ones(rows.size, dtype=np.int64), (rows, cols)), shape=(N, N)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    degrees = np.asarray(A.sum(axis=1), dtype=np.int64).ravel()
    lit_types = np.concatenate([np.ones(n, np.int64), -np.ones(n, np.int64)])
    return Wlig(
        n_vars=n,
        indptr=A.indptr.astype(np.int32),
        indices=A.indices.astype(np.int32),
        weights=A.data.astype(np.int64),
        degrees=degrees,
        lit_types=lit_types,
    )


@dataclass(frozen=True)
class NormAdj:
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray  # float64
    shape: tuple[int, int]

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def total(self) -> float:
        return float(self.data.sum())


def normalize_adjacency(g, norm: str = "global", allow_edgeless: bool = False) -> NormAdj:
    """Normalize an adjacency; ``g`` is a :class:`Wlig` or a square scipy sparse matrix.

    ``norm="global"`` divides every entry by the sum over the full symmetric
    matrix; ``norm="row"`` divides each row by its own sum (rows summing to
    zero stay zero).
    """
    A = g.matrix() if isinstance(g, Wlig) else sp.csr_matrix(g)
    A = A.astype(np.float64)
    A.sort_indices()
    total = A.data.sum()
    if total == 0:
        if not allow_edgeless:
            raise EdgelessGraph("graph has no edges")
        data = np.zeros_like(A.data)
    elif norm == "global":
        data = A.data / total
    elif norm == "row":
        rs = np.asarray(A.sum(axis=1)).ravel()
        data = A.data / np.repeat(np.where(rs == 0, 1.0, rs), np.diff(A.indptr))
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return NormAdj(A.indptr.astype(np.int32), A.indices.astype(np.int32), data, A.shape)


def raw_node_features(g: Wlig, degree: str = "weighted") -> np.ndarray:
    """``(N, 2)`` float array of (degree, literal type) per node."""
    if degree == "weighted":
        d = g.degrees
    elif degree == "simple":
        d = g.simple_degrees()
    else:
        raise ValueError(f"unknown degree mode {degree!r}")
    return np.column_stack([d.astype(np.float64), g.lit_types.astype(np.float64)])


@dataclass(frozen=True)
class Lcg:
    """Bipartite literal/clause membership graph; clause ``j`` is node ``2n + j``."""

    n_vars: int
    n_clauses: int
    lit_nodes: np.ndarray
    clause_ids: np.ndarray

    @property
    def num_nodes(self) -> int:
        return 2 * self.n_vars + self.n_clauses

    @property
    def num_edges(self) -> int:
        return int(self.lit_nodes.size)

    def matrix(self) -> sp.csr_matrix:
        N = self.num_nodes
        r = self.lit_nodes
        c = self.clause_ids + 2 * self.n_vars
        ones = np.ones(r.size, dtype=np.int64)
        A = sp.coo_matrix((np.concatenate([ones, ones]), (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(N, N))
        A = A.tocsr()
        A.sort_indices()
        return A

    def neighbors(self, node: int) -> set[int]:
        A = self.matrix()
        return set(A.indices[A.indptr[node]:A.indptr[node + 1]].tolist())


def build_lcg(cnf: Cnf) -> Lcg:
    n = cnf.num_vars
    lits = [x for c in cnf.clauses for x in c]
    cids = [j for j, c in enumerate(cnf.clauses) for _ in c]
    return Lcg(
        n_vars=n,
        n_clauses=cnf.num_clauses,
        lit_nodes=_lit_nodes(np.asarray(lits, dtype=np.int64), n) if lits else np.zeros(0, np.int64),
        clause_ids=np.asarray(cids, dtype=np.int64),
    )


def lcg_node_features(g: Lcg) -> np.ndarray:
    """Literal nodes get (occurrence count, +-1); clause nodes get (length, 0)."""
    deg = np.asarray(g.matrix().sum(axis=1)).ravel().astype(np.float64)
    types = np.concatenate([np.ones(g.n_vars), -np.ones(g.n_vars), np.zeros(g.n_clauses)])
    return np.column_stack([deg, types])


# ---------------------------------------------------------------- model input


@dataclass(frozen=True)
class Encoded:
    """Everything the model needs for one formula."""

    n_vars: int
    adj: sp.csr_matrix
    features: np.ndarray
    partner: np.ndarray  # flip partner per node, -1 where a node has none
    edgeless: bool = False

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def flip_partner(num_nodes: int, n_vars: int) -> np.ndarray:
    """Half-swap partner for the 2n literal nodes; extra (clause) nodes get -1."""
    half = np.arange(n_vars)
    p = np.full(num_nodes, -1, dtype=np.int64)
    p[:n_vars] = half + n_vars
    p[n_vars:2 * n_vars] = half
    return p


def encode(cnf: Cnf, graph: str = "wlig", norm: str = "global", degree: str = "weighted") -> Encoded:
    if graph == "wlig":
        g = build_wlig(cnf)
        feats = raw_node_features(g, degree)
        A = g.matrix()
    elif graph == "lcg":
        g = build_lcg(cnf)
        feats = lcg_node_features(g)
        A = g.matrix()
    else:
        raise ValueError(f"unknown graph kind {graph!r}")
    edgeless = A.nnz == 0
    na = normalize_adjacency(A, norm=norm, allow_edgeless=True)
    N = feats.shape[0]
    return Encoded(cnf.num_vars, na.matrix(), feats, flip_partner(N, cnf.num_vars), edgeless)


def dump_wlig(g: Wlig) -> str:
    """Text edge list: header ``wlig <N> <nnz>`` then ``i j w`` (1-based, i < j)."""
    A = g.matrix().tocoo()
    keep = A.row < A.col
    r, c, w = A.row[keep], A.col[keep], A.data[keep]
    order = np.lexsort((c, r))
    lines = [f"wlig {g.num_nodes} {int(keep.sum())}"]
    lines += [f"{r[k] + 1} {c[k] + 1} {w[k]}" for k in order]
    return "\n".join(lines) + "\n"
