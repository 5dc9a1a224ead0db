"""General inequality constraints C beta >= c reduced to the nonnegative cone.

The reduction is a change of variables gamma = T beta - t0 with the first q
rows of T equal to C, so that the constraint region becomes
Q = {gamma : gamma_j >= 0, j < q}.  Everything downstream (fitting,
projection, bootstrap) works on the canonical coordinates; results are mapped
back for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class ConstraintSpec:
    """Constraints C beta >= c with C a full-row-rank q x p matrix."""

    C: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "c", c)
        if c.shape[0] != C.shape[0]:
            raise ValueError("c length must match the number of constraint rows")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(c))):
            raise ValueError("constraints contain non-finite entries")
        if self.q > self.p:
            raise ValueError(f"more constraints than coefficients: q={self.q} > p={self.p}")
        if self.q < 1:
            raise ValueError("need at least one constraint row")
        sv = np.linalg.svd(C, compute_uv=False)
        if sv.min() <= _RANK_TOL * sv.max():
            raise ValueError("constraint matrix not full rank")

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[1]


@dataclass(frozen=True)
class CanonicalTransform:
    """Invertible map gamma = T beta - t0 carrying C beta >= c onto the cone Q."""

    T: np.ndarray
    t0: np.ndarray
    q: int

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        t0 = np.asarray(self.t0, dtype=float)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "t0", t0)
        sv = np.linalg.svd(T, compute_uv=False)
        if sv.min() <= _RANK_TOL * sv.max():
            raise ValueError("canonical transform is numerically singular")

    @property
    def p(self) -> int:
        return self.T.shape[0]

    def to_canonical(self, beta: np.ndarray) -> np.ndarray:
        return self.T @ np.asarray(beta, dtype=float) - self.t0

    def from_canonical(self, gamma: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.T, np.asarray(gamma, dtype=float) + self.t0)

    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.T)

    def coordinate_images(self) -> dict[int, tuple[int, float]]:
        """Canonical rows that are pure signed coordinates.

        Returns {original column j: (canonical row k, sign)} for every row of
        T equal to +-e_j.  Used to map tested-column indices through the
        transform; rows mixing several coordinates are omitted.
        """
        out: dict[int, tuple[int, float]] = {}
        for k in range(self.p):
            row = self.T[k]
            nz = np.flatnonzero(np.abs(row) > 1e-12)
            if nz.size == 1 and abs(abs(row[nz[0]]) - 1.0) < 1e-12:
                out[int(nz[0])] = (k, float(np.sign(row[nz[0]])))
        return out


def canonicalize(spec: ConstraintSpec) -> CanonicalTransform:
    """Build the canonical transform for C beta >= c.

    The first q rows of T are C (offset c); the remaining rows are an
    orthonormal basis of the orthogonal complement of C's row space with zero
    offset.  When that complement contains standard basis vectors (columns of
    C that are identically zero) they are used directly, so coordinate-wise
    constraints leave the unconstrained coordinates untouched.
    """
    C, c = spec.C, spec.c
    q, p = spec.q, spec.p
    T = np.zeros((p, p))
    T[:q] = C
    t0 = np.zeros(p)
    t0[:q] = c

    if q < p:
        zero_cols = np.flatnonzero(np.max(np.abs(C), axis=0) == 0.0)
        rows = [np.eye(p)[j] for j in zero_cols]
        need = p - q - len(rows)
        if need > 0:
            # complement basis from the SVD of C, deflated against the e_j rows
            _, _, vt = np.linalg.svd(C, full_matrices=True)
            N = vt[q:].T
            for r in rows:
                N = N - np.outer(r, r @ N)
            u, sv, _ = np.linalg.svd(N, full_matrices=False)
            rows.extend(u[:, i] for i in range(need))
        T[q:] = np.array(rows[: p - q])

    return CanonicalTransform(T=T, t0=t0, q=q)


def transform_dataset(dataset: Dataset, tr: CanonicalTransform) -> Dataset:
    """Carry a regression dataset into canonical coordinates.

    With beta = T^{-1}(gamma + t0) the linear predictor satisfies
    x' beta = z' gamma + z' t0 for z = T^{-T} x, so fitting gamma on
    (y - z' t0, z) over the cone Q is equivalent to fitting beta under
    C beta >= c.
    """
    if dataset.p != tr.p:
        raise ValueError(
            f"dataset has {dataset.p} columns but transform expects {tr.p}"
        )
    Tinv = tr.inverse_matrix()
    Z = dataset.X @ Tinv
    y = dataset.y - Z @ tr.t0
    return Dataset(y, Z, require_intercept=False)
