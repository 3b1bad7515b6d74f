"""Coupling graphs, the modified Laplacian and its spectral split.

Members are indexed from 0. The neighbor set ``N_i`` lists the members whose
composite variables robot ``i`` reads; each edge carries a weight ``w_ij`` so
that the coupled law is ``-K1 s_i + sum_j w_ij K2 s_j``.

Weights by structure
--------------------
ring, p >= 3
    Two neighbors, ``w = 2/m = 1``.
ring, p = 2
    One neighbor with ``w = 1``, so the tracking gain is ``K1 - K2``.
inline
    Interior members as in the ring. The two endpoints have a single
    neighbor and a self-coupling ``+K2 s_i`` which gives the local gain
    ``K1 - K2``.
digraph
    Uni-directional regular graph given by neighbor offsets; ``w = 2/m``
    so that the symmetrized Laplacian has the ring gains.
custom
    Explicit edge list, must be regular; ``w = 2/m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dynamics import ContractViolation


class TopologyError(ContractViolation):
    """Graph request cannot be built as a regular coupling structure."""


def _diag_matrix(x, n, name, allow_zero=True):
    """Coerce a scalar, vector or diagonal matrix to an ``n x n`` matrix."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.ndim == 1:
        if a.shape != (n,):
            raise ContractViolation(f"{name} must have {n} diagonal entries, got {a.shape[0]}")
        a = np.diag(a)
    if a.shape != (n, n):
        raise ContractViolation(f"{name} must be {n}x{n}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} must be finite")
    return a


def _is_spd(A, tol=0.0):
    if not np.allclose(A, A.T, atol=1e-12):
        return False
    return bool(np.linalg.eigvalsh(A).min() > tol)


@dataclass(frozen=True, eq=False)
class Gains:
    """Controller gain matrices for one group of ``n``-DOF robots.

    Parameters
    ----------
    K1, K2, Lambda : scalar, vector or diagonal matrix
    Gamma : scalar, vector or matrix, optional
        Adaptation gain (``k x k``), required for adaptive laws.
    K_inhib : scalar, vector or matrix, optional
        Gain of the inhibitory link.
    n : int
        Joint count; inferred from vector or matrix inputs when omitted.
    """

    K1: np.ndarray
    K2: np.ndarray
    Lambda: np.ndarray
    Gamma: np.ndarray | None = None
    K_inhib: np.ndarray | None = None
    n: int | None = None

    def __post_init__(self):
        n = self.n
        if n is None:
            for x in (self.K1, self.K2, self.Lambda):
                a = np.asarray(x)
                if a.ndim > 0:
                    n = a.shape[0]
                    break
        if n is None:
            raise ContractViolation("cannot infer n from scalar gains; pass n")
        K1 = _diag_matrix(self.K1, n, "K1")
        K2 = _diag_matrix(self.K2, n, "K2")
        Lam = _diag_matrix(self.Lambda, n, "Lambda")
        for name, A in (("K1", K1), ("K2", K2), ("Lambda", Lam)):
            if np.count_nonzero(A - np.diag(np.diag(A))):
                raise ContractViolation(f"{name} must be diagonal")
        if not np.all(np.diag(K1) > 0):
            raise ContractViolation("K1 must be positive definite")
        if not np.all(np.diag(Lam) >= 0):
            raise ContractViolation("Lambda must be nonnegative")
        Gam = self.Gamma
        if Gam is not None:
            g = np.asarray(Gam, dtype=float)
            if g.ndim == 1:
                g = np.diag(g)
            if g.ndim != 2 or g.shape[0] != g.shape[1] or not _is_spd(g):
                raise ContractViolation("Gamma must be symmetric positive definite")
            Gam = g
        Kin = self.K_inhib
        if Kin is not None:
            Kin = _diag_matrix(Kin, n, "K_inhib") if np.ndim(Kin) < 2 else np.asarray(Kin, float)
            if not np.allclose(Kin, Kin.T) or np.linalg.eigvalsh(Kin).min() < 0:
                raise ContractViolation("K_inhib must be symmetric positive semi-definite")
        object.__setattr__(self, "K1", K1)
        object.__setattr__(self, "K2", K2)
        object.__setattr__(self, "Lambda", Lam)
        object.__setattr__(self, "Gamma", Gam)
        object.__setattr__(self, "K_inhib", Kin)
        object.__setattr__(self, "n", n)

    @property
    def lambda_strictly_positive(self) -> bool:
        return bool(np.all(np.diag(self.Lambda) > 0))

    def with_(self, **kw) -> "Gains":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class CouplingGraph:
    """Regular coupling structure of ``p`` members.

    Attributes
    ----------
    neighbors : tuple of tuples
        ``neighbors[i]`` is the ordered in-neighbor list ``N_i``.
    weights : tuple of tuples
        Edge weights aligned with ``neighbors``.
    self_weight : tuple of float
        Self-coupling weight (nonzero only at inline endpoints).
    partial_mask : tuple of int or None
        Diagonal of the selector ``P``; ``None`` means full coupling.
    inhibitory : (a, b) or None
        Member pair carrying the inhibitory link.
    """

    kind: str
    p: int
    neighbors: tuple
    weights: tuple
    self_weight: tuple
    directed: bool = False
    partial_mask: tuple | None = None
    inhibitory: tuple | None = None

    @property
    def m(self) -> int:
        """Common in-neighbor count."""
        return len(self.neighbors[0])

    def edges(self):
        """Iterate ``(i, j, w)`` for every coupling ``j -> i``."""
        for i, (nb, ws) in enumerate(zip(self.neighbors, self.weights)):
            for j, w in zip(nb, ws):
                yield i, j, w

    def adjacency(self) -> np.ndarray:
        """Weighted ``p x p`` matrix ``W`` with ``W[i, j] = w_ij`` plus self weights."""
        W = np.zeros((self.p, self.p))
        for i, j, w in self.edges():
            W[i, j] += w
        W[np.diag_indices(self.p)] += np.asarray(self.self_weight)
        return W

    def selector(self, n: int) -> np.ndarray:
        if self.partial_mask is None:
            return np.eye(n)
        if len(self.partial_mask) != n:
            raise ContractViolation(f"partial mask has {len(self.partial_mask)} entries, model has n={n}")
        return np.diag(np.asarray(self.partial_mask, dtype=float))

    def is_endpoint(self, i: int) -> bool:
        return self.kind == "inline" and i in (0, self.p - 1)


def _check_mask(mask):
    if mask is None:
        return None
    mask = tuple(int(round(float(x))) if float(x) in (0.0, 1.0) else float(x) for x in mask)
    if any(x not in (0, 1) for x in mask):
        raise ContractViolation(f"partial selector entries must be 0 or 1, got {mask}")
    return mask


def _check_pair(pair, p):
    if pair is None:
        return None
    a, b = (int(x) for x in pair)
    if not (0 <= a < p and 0 <= b < p) or a == b:
        raise ContractViolation(f"inhibitory link must join two distinct members in 0..{p - 1}")
    return (a, b)


def _validate_regular(p, neighbors, directed):
    counts = {len(nb) for nb in neighbors}
    if len(counts) != 1 or 0 in counts:
        raise TopologyError(
            "graph is not regular: in-neighbor counts "
            f"{[len(nb) for nb in neighbors]}; use a concurrent hierarchy for unbalanced structures")
    for i, nb in enumerate(neighbors):
        if i in nb:
            raise TopologyError(f"member {i} lists itself as a neighbor")
        if len(set(nb)) != len(nb):
            raise TopologyError(f"member {i} has duplicate neighbors")
        if any(not 0 <= j < p for j in nb):
            raise TopologyError(f"member {i} has out-of-range neighbor")
    if directed:
        # regularity must survive symmetrization L + L'
        sym = np.zeros((p, p), dtype=bool)
        for i, nb in enumerate(neighbors):
            sym[i, list(nb)] = True
        sym = sym | sym.T
        rows = set(sym.sum(axis=1))
        if len(rows) != 1:
            raise TopologyError("symmetrized digraph is not regular: "
                                f"row counts {sym.sum(axis=1).tolist()}")
    else:
        for i, nb in enumerate(neighbors):
            for j in nb:
                if i not in neighbors[j]:
                    raise TopologyError(f"undirected edge {j}->{i} has no reverse edge")


def build_graph(kind: str, p: int, *, directed=None, partial_mask=None, inhibitory=None,
                edges=None, offsets=None) -> CouplingGraph:
    """Build a regular coupling graph.

    Parameters
    ----------
    kind : {"ring", "inline", "digraph", "custom"}
    p : int
        Member count, at least 2.
    directed : bool, optional
        Only meaningful for ``custom``; ``digraph`` is always directed.
    partial_mask : sequence of {0, 1}, optional
        Diagonal of the partial-state selector ``P``.
    inhibitory : (a, b), optional
        Member pair for an inhibitory link (see ``apply_inhibition``).
    edges : sequence of (i, j), optional
        For ``custom``: ``j`` is an in-neighbor of ``i``.
    offsets : sequence of int, optional
        For ``digraph``: ``N_i = {i + o mod p}``. Default ``(-1,)``.

    Returns
    -------
    CouplingGraph
    """
    p = int(p)
    if p < 2:
        raise TopologyError("a coupled network needs p >= 2")
    mask = _check_mask(partial_mask)
    pair = _check_pair(inhibitory, p)
    self_w = [0.0] * p
    if kind == "ring":
        if p == 2:
            nbrs = [[1], [0]]
            wts = [[1.0], [1.0]]
        else:
            nbrs = [[(i - 1) % p, (i + 1) % p] for i in range(p)]
            wts = [[1.0, 1.0] for _ in range(p)]
        is_dir = False
    elif kind == "inline":
        if p == 2:
            nbrs = [[1], [0]]
            wts = [[1.0], [1.0]]
        else:
            nbrs = [[1]] + [[i - 1, i + 1] for i in range(1, p - 1)] + [[p - 2]]
            wts = [[1.0] * len(nb) for nb in nbrs]
            self_w[0] = self_w[-1] = 1.0
        is_dir = False
        graph = CouplingGraph(kind, p, tuple(map(tuple, nbrs)), tuple(map(tuple, wts)),
                              tuple(self_w), False, mask, pair)
        return graph
    elif kind == "digraph":
        offs = tuple(offsets) if offsets is not None else (-1,)
        nbrs = [[(i + o) % p for o in offs] for i in range(p)]
        _validate_regular(p, nbrs, True)
        m = len(offs)
        wts = [[2.0 / m] * m for _ in range(p)]
        is_dir = True
    elif kind == "custom":
        if edges is None:
            raise TopologyError("custom graph needs an explicit edge list")
        nbrs = [[] for _ in range(p)]
        for i, j in edges:
            nbrs[int(i)].append(int(j))
        is_dir = bool(directed)
        _validate_regular(p, nbrs, is_dir)
        m = len(nbrs[0])
        wts = [[2.0 / m] * m for _ in range(p)]
    else:
        raise TopologyError(f"unknown graph kind {kind!r}")
    if kind == "ring":
        _validate_regular(p, nbrs, False)
    return CouplingGraph(kind, p, tuple(map(tuple, nbrs)), tuple(map(tuple, wts)),
                         tuple(self_w), is_dir, mask, pair)


@dataclass(frozen=True)
class GraphSchedule:
    """Piecewise-constant sequence of graphs; ``graphs[k]`` is active from ``times[k]``."""

    times: tuple
    graphs: tuple

    def __post_init__(self):
        if len(self.times) != len(self.graphs) or not self.graphs:
            raise ContractViolation("schedule needs one start time per graph")
        if self.times[0] != 0.0 or any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ContractViolation("schedule times must start at 0 and increase")
        if len({g.p for g in self.graphs}) != 1:
            raise ContractViolation("all graphs in a schedule must have the same p")

    @property
    def p(self):
        return self.graphs[0].p

    def index_at(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def at(self, t: float) -> CouplingGraph:
        return self.graphs[self.index_at(t)]


@dataclass(frozen=True, eq=False)
class ModifiedLaplacian:
    """Block matrices of the coupled closed loop ``[M] x' + [C] x + L x = 0``."""

    L: np.ndarray
    U: np.ndarray
    p: int
    n: int
    symmetric: bool

    def block(self, i, j):
        n = self.n
        return self.L[i * n:(i + 1) * n, j * n:(j + 1) * n]

    def symmetrized(self) -> np.ndarray:
        return 0.5 * (self.L + self.L.T)


def modified_laplacian(graph: CouplingGraph, gains: Gains, n: int | None = None) -> ModifiedLaplacian:
    """Assemble ``L`` and ``U`` for ``graph`` under ``gains``.

    ``L_ii = K1 - w_self G``, ``L_ij = -w_ij G`` with ``G = K2 P``. An
    inhibitory pair ``(a, b)`` adds ``K_inhib`` to the four blocks
    ``(a, a), (a, b), (b, a), (b, b)``. ``U`` has every block equal to ``G``.
    """
    n = gains.n if n is None else n
    if gains.n != n:
        raise ContractViolation(f"gains are {gains.n}-dimensional, model has n={n}")
    p = graph.p
    G = gains.K2 @ graph.selector(n)
    W = graph.adjacency()
    L = np.kron(np.eye(p), gains.K1) - np.kron(W, G)
    if graph.inhibitory is not None and gains.K_inhib is not None:
        a, b = graph.inhibitory
        K = gains.K_inhib
        for i in (a, b):
            for j in (a, b):
                L[i * n:(i + 1) * n, j * n:(j + 1) * n] += K
    U = np.kron(np.ones((p, p)), G)
    return ModifiedLaplacian(L, U, p, n, bool(np.allclose(L, L.T, atol=1e-14)))


@dataclass(frozen=True, eq=False)
class SyncBasis:
    """Orthonormal split into the consensus block and its complement.

    ``V = [one_block, V_sync]`` with ``V' V = I`` and, when ``[1]`` is an
    eigenblock of ``L``, ``V' L V = diag(D1, D2)``.
    """

    one_block: np.ndarray
    V_sync: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    p: int
    n: int
    offdiag: float = 0.0
    eigenvalues: np.ndarray = field(default=None)

    @property
    def V(self) -> np.ndarray:
        return np.hstack([self.one_block, self.V_sync])

    @property
    def block_diagonal(self) -> bool:
        return self.offdiag < 1e-10

    def D(self) -> np.ndarray:
        k = self.n
        D = np.zeros((self.p * k, self.p * k))
        D[:k, :k] = self.D1
        D[k:, k:] = self.D2
        return D

    def project(self, stacked: np.ndarray) -> np.ndarray:
        """``V_sync' x`` for stacked vectors; accepts shape (..., p, n) or (..., p*n)."""
        x = np.asarray(stacked)
        if x.shape[-2:] == (self.p, self.n):
            x = x.reshape(*x.shape[:-2], self.p * self.n)
        return x @ self.V_sync


def consensus_block(p: int, n: int) -> np.ndarray:
    return np.kron(np.ones((p, 1)), np.eye(n)) / np.sqrt(p)


def _fix_sign(v, tol=1e-12):
    nz = np.flatnonzero(np.abs(v) > tol)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def _gram_schmidt(cols, dim, tol=1e-9):
    out = []
    for c in cols.T:
        v = c.copy()
        for u in out:
            v -= (u @ v) * u
        for u in out:  # second pass for numerical orthogonality
            v -= (u @ v) * u
        nv = np.linalg.norm(v)
        if nv > tol:
            out.append(v / nv)
        if len(out) == dim:
            break
    return np.column_stack(out) if out else np.zeros((cols.shape[0], 0))


def sync_basis(L, p: int, n: int, *, cluster_tol: float = 1e-8) -> SyncBasis:
    """Spectral split of a symmetric modified Laplacian.

    The complement of ``[1]`` is first spanned by Gram-Schmidt on the
    canonical vectors ``(e_k - 1/p) (x) e_j``. Its columns are then aligned
    with the eigenspaces of ``L`` restricted to the complement: canonical
    candidates are projected onto each eigenspace and re-orthonormalized,
    which keeps the basis deterministic when eigenvalues repeat.
    ``D2`` is ordered by descending eigenvalue and every column has its
    first nonzero entry positive.

    Raises
    ------
    ContractViolation
        If ``L`` is not symmetric; symmetrize digraph Laplacians first.
    """
    Lm = L.L if isinstance(L, ModifiedLaplacian) else np.asarray(L, dtype=float)
    N = p * n
    if Lm.shape != (N, N):
        raise ContractViolation(f"L must be {N}x{N}, got {Lm.shape}")
    if not np.allclose(Lm, Lm.T, atol=1e-12 * max(1.0, np.abs(Lm).max())):
        raise ContractViolation("sync_basis needs a symmetric L; pass (L + L')/2 for digraphs")
    Lm = 0.5 * (Lm + Lm.T)
    one = consensus_block(p, n)
    cand = np.eye(N)[:, : (p - 1) * n] - one @ (one.T[:, : (p - 1) * n])
    Q = _gram_schmidt(cand, (p - 1) * n)
    if p == 1 or Q.shape[1] == 0:
        D1 = one.T @ Lm @ one
        return SyncBasis(one, Q, D1, np.zeros((0, 0)), p, n, 0.0, np.linalg.eigvalsh(D1))
    B = Q.T @ Lm @ Q
    B = 0.5 * (B + B.T)
    w, Z = np.linalg.eigh(B)
    scale = max(1.0, np.abs(w).max())
    order = np.argsort(-w, kind="stable")
    w, Z = w[order], Z[:, order]
    cols = []
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and abs(w[j] - w[i]) <= cluster_tol * scale:
            j += 1
        E = Q @ Z[:, i:j]
        proj = E @ (E.T @ Q)
        basis = _gram_schmidt(proj, j - i)
        if basis.shape[1] < j - i:  # fall back to the raw eigenvectors
            basis = E
        cols.extend(_fix_sign(b) for b in basis.T)
        i = j
    Vs = np.column_stack(cols)
    D1 = one.T @ Lm @ one
    D2 = Vs.T @ Lm @ Vs
    D2[np.abs(D2) < 1e-13 * scale] = 0.0
    off = float(np.abs(Vs.T @ Lm @ one).max())
    eig = np.linalg.eigvalsh(Lm)
    return SyncBasis(one, Vs, 0.5 * (D1 + D1.T), 0.5 * (D2 + D2.T), p, n, off, eig)


@dataclass(frozen=True)
class ConditionReport:
    tracking_ok: bool
    sync_ok: bool
    indifferent: bool
    rate_tracking: float
    rate_sync: float
    symmetrized: bool
    min_eig_L: float
    min_eig_LU: float
    D1_eigs: tuple
    D2_eigs: tuple
    spectrum: tuple

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def check_conditions(L: ModifiedLaplacian, U=None, basis: SyncBasis | None = None,
                     tol: float = 1e-9) -> ConditionReport:
    """Evaluate the tracking, synchronization and indifference conditions.

    Digraph Laplacians are analysed through ``(L + L')/2``.
    """
    sym = not L.symmetric
    Ls = L.symmetrized()
    Um = L.U if U is None else (U.U if isinstance(U, ModifiedLaplacian) else np.asarray(U))
    if basis is None:
        basis = sync_basis(Ls, L.p, L.n)
    scale = max(1.0, np.abs(Ls).max())
    eL = float(np.linalg.eigvalsh(Ls).min())
    eLU = float(np.linalg.eigvalsh(Ls + 0.5 * (Um + Um.T)).min())
    d1 = np.linalg.eigvalsh(basis.D1)
    d2 = np.linalg.eigvalsh(basis.D2) if basis.D2.size else np.array([np.inf])
    indiff = bool(np.all(np.abs(d1) <= tol * scale) and d2.min() > tol * scale)
    return ConditionReport(
        tracking_ok=eL > tol * scale,
        sync_ok=eLU > tol * scale,
        indifferent=indiff,
        rate_tracking=float(d1.min()),
        rate_sync=float(d2.min()),
        symmetrized=sym,
        min_eig_L=eL,
        min_eig_LU=eLU,
        D1_eigs=tuple(float(x) for x in d1),
        D2_eigs=tuple(float(x) for x in np.sort(np.diag(basis.D2))[::-1]) if basis.D2.size else (),
        spectrum=tuple(float(x) for x in np.diag(basis.D1)) +
                 (tuple(float(x) for x in np.diag(basis.D2)) if basis.D2.size else ()),
    )


def analyze(graph: CouplingGraph, gains: Gains, n: int | None = None):
    """Convenience: ``(laplacian, basis, report)`` for a graph and gains."""
    lap = modified_laplacian(graph, gains, n)
    basis = sync_basis(lap.symmetrized(), lap.p, lap.n)
    return lap, basis, check_conditions(lap, basis=basis)


def sufficient_conditions(graph: CouplingGraph, gains: Gains) -> dict:
    """Closed-form gain conditions for the standard structures (diagonal gains)."""
    k1 = np.diag(gains.K1)
    k2 = np.diag(gains.K2 @ graph.selector(gains.n))
    if graph.p == 2:
        track = k1 - k2
        label = "K1 - K2 > 0"
    else:
        track = k1 - 2 * k2
        label = "K1 - 2 K2 > 0"
    return {"condition": label, "margin": track.tolist(), "holds": bool(np.all(track > 0))}


def apply_inhibition(graph: CouplingGraph, gains: Gains, pair: Sequence[int], K,
                     tol: float = 1e-9):
    """Add an inhibitory link ``-K (s_a + s_b)`` to members ``a`` and ``b``.

    Only meaningful on an indifferent network (``D1 = 0``). ``K = 0``
    returns the inputs unchanged.

    Returns
    -------
    (CouplingGraph, Gains)
    """
    Km = _diag_matrix(K, gains.n, "K") if np.ndim(K) < 2 else np.asarray(K, dtype=float)
    if not np.allclose(Km, Km.T):
        raise ContractViolation("inhibition gain must be symmetric")
    ev = np.linalg.eigvalsh(Km)
    if np.all(ev == 0):
        return graph, gains
    if ev.min() <= 0:
        raise ContractViolation("inhibition gain K must be positive definite")
    _, _, rep = analyze(replace(graph, inhibitory=None), gains.with_(K_inhib=None))
    if not rep.indifferent:
        raise ContractViolation("inhibition applies to an indifferent network (D1 = 0)")
    return replace(graph, inhibitory=_check_pair(pair, graph.p)), gains.with_(K_inhib=Km)
