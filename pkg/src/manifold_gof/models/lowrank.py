"""Low-rank matrix and third-order tensor completion models.

Real completion parameterizes X = V W^T with V (n1 x r), W (n2 x r);
the complex variant carries two factor pairs and maps to stacked real and
imaginary observed values.  The tensor model parameterizes a rank-r CP sum
with factors A (n1 x r), B (n2 x r), C (n3 x r).  All maps are restricted to
an observed index set; the unobserved coordinates form the linear null-space
part of the decomposable view and are materialized only for well-posedness
checks.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError, InvalidParameterError
from ..model import DecomposableModel, ManifoldModel


def sample_index_set(shape, size, rng):
    """Uniform-without-replacement index sample over a grid.

    Returns an (size, len(shape)) int array of multi-indices.
    """
    total = int(np.prod(shape))
    if not 1 <= size <= total:
        raise InvalidParameterError(f"index set size {size} not in [1, {total}]")
    flat = rng.choice(total, size=size, replace=False)
    return np.column_stack(np.unravel_index(np.sort(flat), shape))


def _check_omega(omega, shape):
    omega = np.asarray(omega, dtype=int)
    if omega.ndim != 2 or omega.shape[1] != len(shape):
        raise InvalidInputError(f"index set must be (nobs, {len(shape)}), got {omega.shape}")
    if omega.shape[0] == 0:
        raise InvalidInputError("index set is empty")
    for axis, n in enumerate(shape):
        if omega[:, axis].min() < 0 or omega[:, axis].max() >= n:
            raise InvalidInputError(f"index set column {axis} out of range for size {n}")
    return omega


class MatrixCompletionModel(ManifoldModel):
    """Rank-r matrix observed on an index set, over the real or complex field.

    Parameters are the factor entries: real field ``theta = [V, W]`` with
    d = r (n1 + n2); complex field ``theta = [V1, W1, V2, W2]`` with
    d = 2 r (n1 + n2).  The map returns observed entries (real field) or
    observed real parts followed by observed imaginary parts (complex field).
    """

    def __init__(self, n1, n2, rank, omega, field="real"):
        if rank < 1 or rank > min(n1, n2):
            raise InvalidParameterError(f"rank {rank} not in [1, min(n1, n2)]")
        if field not in ("real", "complex"):
            raise InvalidParameterError(f"field must be 'real' or 'complex', got {field!r}")
        self.n1, self.n2, self.rank = int(n1), int(n2), int(rank)
        self.field = field
        self.omega = _check_omega(omega, (n1, n2))
        self._rows = self.omega[:, 0]
        self._cols = self.omega[:, 1]
        nobs = self.omega.shape[0]
        blocks = 1 if field == "real" else 2
        self.param_dim = blocks * rank * (n1 + n2)
        self.obs_dim = blocks * nobs
        rho = rank * (n1 + n2 - rank) * blocks
        self.nonlinear_rank = rho
        # full-map characteristic rank under well-posedness (Eq.-style count:
        # manifold dimension plus null-space dimension)
        self.claimed_char_rank = rho + blocks * (n1 * n2 - nobs)

    @property
    def num_observed(self):
        return self.omega.shape[0]

    @property
    def dof(self):
        """Test degrees of freedom at this order: observed minus manifold dim."""
        return self.obs_dim - self.nonlinear_rank

    # -- parameter packing ---------------------------------------------------

    def unpack(self, theta):
        theta = self._check_theta(theta)
        n1, n2, r = self.n1, self.n2, self.rank
        if self.field == "real":
            V = theta[: n1 * r].reshape(n1, r)
            W = theta[n1 * r:].reshape(n2, r)
            return V, W
        s = 0
        out = []
        for n in (n1, n2, n1, n2):
            out.append(theta[s: s + n * r].reshape(n, r))
            s += n * r
        return tuple(out)  # V1, W1, V2, W2

    @staticmethod
    def pack(*factors):
        return np.concatenate([f.ravel() for f in factors])

    # -- map and Jacobian ----------------------------------------------------

    def evaluate(self, theta):
        i, j = self._rows, self._cols
        if self.field == "real":
            V, W = self.unpack(theta)
            return np.sum(V[i] * W[j], axis=1)
        V1, W1, V2, W2 = self.unpack(theta)
        re = np.sum(V1[i] * W1[j] - V2[i] * W2[j], axis=1)
        im = np.sum(V1[i] * W2[j] + V2[i] * W1[j], axis=1)
        return np.concatenate([re, im])

    def _factor_block(self, values_left, values_right, n_left, n_right):
        # d(entry)/d(left factor row) = right factor row and vice versa
        nobs, r = values_left.shape
        i, j = self._rows, self._cols
        JL = np.zeros((nobs, n_left * r))
        JR = np.zeros((nobs, n_right * r))
        rows = np.arange(nobs)
        for k in range(r):
            JL[rows, i * r + k] = values_right[:, k]
            JR[rows, j * r + k] = values_left[:, k]
        return JL, JR

    def jacobian(self, theta):
        i, j = self._rows, self._cols
        if self.field == "real":
            V, W = self.unpack(theta)
            JV, JW = self._factor_block(V[i], W[j], self.n1, self.n2)
            return np.concatenate([JV, JW], axis=1)
        V1, W1, V2, W2 = self.unpack(theta)
        # _factor_block(L[i], R[j]) returns (d(sum L R)/dL, d(sum L R)/dR)
        dV1_11, dW1_11 = self._factor_block(V1[i], W1[j], self.n1, self.n2)
        dV2_22, dW2_22 = self._factor_block(V2[i], W2[j], self.n1, self.n2)
        dV1_12, dW2_12 = self._factor_block(V1[i], W2[j], self.n1, self.n2)
        dV2_21, dW1_21 = self._factor_block(V2[i], W1[j], self.n1, self.n2)
        # re = V1 W1^T - V2 W2^T, column order [V1, W1, V2, W2]
        re = np.concatenate([dV1_11, dW1_11, -dV2_22, -dW2_22], axis=1)
        # im = V1 W2^T + V2 W1^T
        im = np.concatenate([dV1_12, dW1_21, dV2_21, dW2_12], axis=1)
        return np.concatenate([re, im], axis=0)

    # -- decomposable view ---------------------------------------------------

    def full_model(self):
        """Same factorization evaluated on every grid entry (no restriction)."""
        full = np.column_stack(np.unravel_index(np.arange(self.n1 * self.n2),
                                                (self.n1, self.n2)))
        return MatrixCompletionModel(self.n1, self.n2, self.rank, full, self.field)

    def decomposable(self):
        """Full-space map plus indicator columns for unobserved coordinates."""
        blocks = 1 if self.field == "real" else 2
        total = self.n1 * self.n2
        observed_flat = self._rows * self.n2 + self._cols
        unobserved = np.setdiff1d(np.arange(total), observed_flat)
        k = unobserved.size * blocks
        A = np.zeros((blocks * total, k))
        for b in range(blocks):
            for t, u in enumerate(unobserved):
                A[b * total + u, b * unobserved.size + t] = 1.0
        return DecomposableModel(nonlinear=self.full_model(), linear_part=A)


class TensorCPModel(ManifoldModel):
    """Rank-r third-order CP tensor observed on an index set.

    ``theta = [A, B, C]`` row-major with shapes (n1, r), (n2, r), (n3, r);
    the observed entry (i, j, l) is sum_k A[i,k] B[j,k] C[l,k].  Partial
    derivatives place the products of the other two factors in the matching
    columns; every other entry of the Jacobian is zero.
    """

    def __init__(self, n1, n2, n3, rank, omega=None):
        if rank < 1:
            raise InvalidParameterError(f"tensor rank must be >= 1, got {rank}")
        self.n1, self.n2, self.n3, self.rank = int(n1), int(n2), int(n3), int(rank)
        if omega is None:
            omega = np.column_stack(np.unravel_index(np.arange(n1 * n2 * n3),
                                                     (n1, n2, n3)))
        self.omega = _check_omega(omega, (n1, n2, n3))
        self.param_dim = rank * (n1 + n2 + n3)
        self.obs_dim = self.omega.shape[0]
        # identifiability-formula value; attained only when the model is
        # generically locally identifiable, so treat as an upper bound
        self.rank_formula = rank * (n1 + n2 + n3 - 2)
        self.claimed_char_rank = None

    @property
    def num_observed(self):
        return self.omega.shape[0]

    def unpack(self, theta):
        theta = self._check_theta(theta)
        r = self.rank
        sizes = (self.n1 * r, self.n2 * r, self.n3 * r)
        A = theta[: sizes[0]].reshape(self.n1, r)
        B = theta[sizes[0]: sizes[0] + sizes[1]].reshape(self.n2, r)
        C = theta[sizes[0] + sizes[1]:].reshape(self.n3, r)
        return A, B, C

    @staticmethod
    def pack(A, B, C):
        return np.concatenate([A.ravel(), B.ravel(), C.ravel()])

    def evaluate(self, theta):
        A, B, C = self.unpack(theta)
        i, j, l = self.omega.T
        return np.sum(A[i] * B[j] * C[l], axis=1)

    def jacobian(self, theta):
        A, B, C = self.unpack(theta)
        i, j, l = self.omega.T
        r = self.rank
        nobs = self.obs_dim
        rows = np.arange(nobs)
        JA = np.zeros((nobs, self.n1 * r))
        JB = np.zeros((nobs, self.n2 * r))
        JC = np.zeros((nobs, self.n3 * r))
        Ai, Bj, Cl = A[i], B[j], C[l]
        for k in range(r):
            JA[rows, i * r + k] = Bj[:, k] * Cl[:, k]
            JB[rows, j * r + k] = Ai[:, k] * Cl[:, k]
            JC[rows, l * r + k] = Ai[:, k] * Bj[:, k]
        return np.concatenate([JA, JB, JC], axis=1)

    def full_model(self):
        return TensorCPModel(self.n1, self.n2, self.n3, self.rank, omega=None)

    def decomposable(self):
        total = self.n1 * self.n2 * self.n3
        observed_flat = np.ravel_multi_index(self.omega.T, (self.n1, self.n2, self.n3))
        unobserved = np.setdiff1d(np.arange(total), observed_flat)
        A = np.zeros((total, unobserved.size))
        A[unobserved, np.arange(unobserved.size)] = 1.0
        return DecomposableModel(nonlinear=self.full_model(), linear_part=A)
