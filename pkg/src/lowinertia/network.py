"""DC susceptance matrix and Kron elimination of non-generator buses."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .case import NetworkCase
from .errors import SingularNetworkError

# below this many buses B_LL is factorized densely
DENSE_LIMIT = 200


@dataclass(frozen=True)
class SusceptancePartition:
    """Blocks of the DC susceptance Laplacian with generator buses first.

    Blocks are sparse CSR matrices; ``full()`` returns the dense reordered matrix.
    """

    B_GG: sp.csr_matrix
    B_GL: sp.csr_matrix
    B_LG: sp.csr_matrix
    B_LL: sp.csr_matrix
    gen_index: tuple[int, ...]
    load_index: tuple[int, ...]

    def full(self) -> np.ndarray:
        return sp.bmat([[self.B_GG, self.B_GL], [self.B_LG, self.B_LL]]).toarray() \
            if self.load_index else self.B_GG.toarray()


@dataclass(frozen=True)
class ReducedNetwork:
    B_r: np.ndarray
    B_L: np.ndarray
    gen_index: tuple[int, ...]
    load_index: tuple[int, ...]

    def generator_power(self, d_delta_g, d_p_l) -> np.ndarray:
        """Generator injection change for given generator angles and load-bus injection changes."""
        return self.B_r @ np.asarray(d_delta_g, float) + self.B_L @ np.asarray(d_p_l, float)


def laplacian(case: NetworkCase, order=None) -> sp.csr_matrix:
    """Branch-susceptance Laplacian (1/x per in-service branch) in the given bus order."""
    order = list(case.bus_ids if order is None else order)
    pos = {b: i for i, b in enumerate(order)}
    live = [br for br in case.branches if br.status]
    f = np.array([pos[br.from_bus] for br in live], dtype=int)
    t = np.array([pos[br.to_bus] for br in live], dtype=int)
    b = np.array([1.0 / br.x for br in live])
    n = len(order)
    rows = np.concatenate([f, t, f, t])
    cols = np.concatenate([t, f, f, t])
    vals = np.concatenate([-b, -b, b, b])
    # duplicate (parallel) entries are summed by the COO -> CSR conversion
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def build_susceptance(case: NetworkCase) -> SusceptancePartition:
    gen = case.gen_index
    load = case.load_index
    B = laplacian(case, gen + load)
    ng = len(gen)
    return SusceptancePartition(
        B_GG=B[:ng, :ng].tocsr(),
        B_GL=B[:ng, ng:].tocsr(),
        B_LG=B[ng:, :ng].tocsr(),
        B_LL=B[ng:, ng:].tocsr(),
        gen_index=tuple(gen),
        load_index=tuple(load),
    )


def kron_reduce(partition: SusceptancePartition) -> ReducedNetwork:
    """Eliminate load buses: B_r = B_GG - B_GL B_LL^-1 B_LG, B_L = B_GL B_LL^-1.

    B_LL^-1 is never formed; one multi-right-hand-side solve gives
    X = B_LL^-1 B_LG, and B_L = X^T by symmetry.
    """
    p = partition
    m = len(p.load_index)
    B_GG = p.B_GG.toarray()
    if m == 0:
        return ReducedNetwork(B_GG, np.zeros((len(p.gen_index), 0)), p.gen_index, p.load_index)

    if m + len(p.gen_index) < DENSE_LIMIT:
        B_LL = p.B_LL.toarray()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", sla.LinAlgWarning)
                lu = sla.lu_factor(B_LL, check_finite=False)
        except (ValueError, np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
            raise SingularNetworkError(f"B_LL factorization failed: {exc}") from exc
        diag = np.abs(np.diag(lu[0]))
        if diag.min() <= 1e-12 * max(diag.max(), 1.0):
            raise SingularNetworkError("B_LL is singular: some load buses are islanded from all generators")
        X = sla.lu_solve(lu, p.B_LG.toarray(), check_finite=False)
    else:
        try:
            lu = spla.splu(p.B_LL.tocsc())
        except RuntimeError as exc:
            raise SingularNetworkError(f"B_LL is singular: {exc}") from exc
        X = lu.solve(p.B_LG.toarray())

    if not np.all(np.isfinite(X)):
        raise SingularNetworkError("B_LL solve produced non-finite values (islanded load buses)")
    B_r = B_GG - p.B_GL @ X
    B_r = 0.5 * (B_r + B_r.T)
    return ReducedNetwork(B_r, np.ascontiguousarray(X.T), p.gen_index, p.load_index)


def reduce_case(case: NetworkCase) -> ReducedNetwork:
    return kron_reduce(build_susceptance(case))


def relative_incidence(n: int) -> np.ndarray:
    """(n-1) x n map from absolute generator angles to angles relative to the last generator."""
    if n < 2:
        raise ValueError(f"relative angles need at least two generators, got n={n}")
    return np.hstack([np.eye(n - 1), -np.ones((n - 1, 1))])
