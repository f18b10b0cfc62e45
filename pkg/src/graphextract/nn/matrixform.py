"""Matrix-form single-layer propagation: H' = (phi*I + psi*A_norm) H / eta.

Serves as the independent oracle for node-wise aggregation equivalence
checks.  ``psi`` may be a scalar or an n x n weight matrix (applied
elementwise to the normalized adjacency).  ``eta`` is either 1 or the
per-row factor deg+1, which expresses mean aggregation over {self} union
neighbors exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MatrixFormSpec:
    phi: float
    psi: object                      # scalar or (n, n) array
    normalization: str = "none"      # none | random-walk
    eta: str = "one"                 # one | deg-plus-one

    def __post_init__(self):
        if self.normalization not in ("none", "random-walk"):
            raise ValueError("unknown normalization %r" % self.normalization)
        if self.eta not in ("one", "deg-plus-one"):
            raise ValueError("unknown eta %r" % self.eta)

    @classmethod
    def for_sage(cls):
        """Self plus degree-normalized neighbor sum: (I + D^-1 A) H."""
        return cls(phi=1.0, psi=1.0, normalization="random-walk")

    @classmethod
    def for_gin(cls, eps=0.0):
        """((1+eps) I + A) H on the unnormalized adjacency."""
        return cls(phi=1.0 + eps, psi=1.0, normalization="none")

    @classmethod
    def for_gat(cls, xi):
        """(Xi (x) A) H with a learned neighbor-weight matrix, no self term."""
        return cls(phi=0.0, psi=np.asarray(xi, dtype=np.float64),
                   normalization="none")

    @classmethod
    def for_self_union_mean(cls):
        """Exact matrix twin of mean over {self} union neighbors:
        (I + A) H row-divided by deg+1."""
        return cls(phi=1.0, psi=1.0, normalization="none", eta="deg-plus-one")


def matrix_form_forward(spec: MatrixFormSpec, H, A):
    """Evaluate one propagation step of ``spec`` on representations H with
    symmetric {0,1} adjacency A.  Isolated nodes under random-walk
    normalization get a zero adjacency row (self-only propagation)."""
    H = np.asarray(H, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("adjacency must be square")
    if H.shape[0] != n:
        raise ValueError("H rows %d != adjacency size %d" % (H.shape[0], n))
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric")
    deg = A.sum(axis=1)
    if spec.normalization == "random-walk":
        scale = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
        A_norm = A * scale[:, None]
    else:
        A_norm = A
    if np.isscalar(spec.psi) or np.asarray(spec.psi).size == 1:
        M = float(spec.psi) * A_norm
    else:
        psi = np.asarray(spec.psi, dtype=np.float64)
        if psi.shape != (n, n):
            raise ValueError("matrix psi must be n x n")
        M = psi * A_norm
    M = M + spec.phi * np.eye(n)
    out = M @ H
    if spec.eta == "deg-plus-one":
        out = out / (deg + 1.0)[:, None]
    return out
