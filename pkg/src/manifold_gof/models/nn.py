"""One-hidden-layer network model with fixed output weights.

The map sends a weight matrix U (d x r) to the m fitted values
g_i(U) = sum_k q(u_k . x_i) over a fixed design, where q is a quadratic,
sigmoid, or rectifier activation.  Rank-1 symmetric matrix sensing with
measurements <x_i x_i^T, U U^T> is the quadratic case of the same map.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import InvalidInputError, InvalidParameterError
from ..model import ManifoldModel

ACTIVATIONS = ("quadratic", "sigmoid", "relu")


class OneLayerNNModel(ManifoldModel):
    """g_i(U) = 1^T q(U^T x_i) over a fixed design matrix.

    ``theta`` is U flattened row-major, so column (j, k) of the Jacobian is
    indexed j * r + k.  Claimed characteristic ranks: d r - r (r - 1) / 2 for
    the quadratic activation (the map factors through U U^T) and d r for the
    sigmoid.  The rectifier is not analytic and carries no claim; tests that
    use dof = m - d r for it are heuristic.
    """

    def __init__(self, design, hidden_units, activation):
        design = np.asarray(design, dtype=float)
        if design.ndim != 2 or design.shape[0] < 1:
            raise InvalidInputError(f"design must be (m, d), got {design.shape}")
        if not np.all(np.isfinite(design)):
            raise InvalidInputError("design has non-finite entries")
        if hidden_units < 1:
            raise InvalidParameterError("hidden_units must be >= 1")
        if activation not in ACTIVATIONS:
            raise InvalidParameterError(f"activation must be one of {ACTIVATIONS}")
        self.design = design
        self.m, self.d = design.shape
        self.r = int(hidden_units)
        self.activation = activation
        self.param_dim = self.d * self.r
        self.obs_dim = self.m
        if activation == "quadratic":
            self.claimed_char_rank = self.d * self.r - self.r * (self.r - 1) // 2
        elif activation == "sigmoid":
            self.claimed_char_rank = self.d * self.r
        else:
            self.claimed_char_rank = None

    def unpack(self, theta):
        return self._check_theta(theta).reshape(self.d, self.r)

    def evaluate(self, theta):
        Z = self.design @ self.unpack(theta)
        if self.activation == "quadratic":
            return np.sum(Z * Z, axis=1)
        if self.activation == "sigmoid":
            return np.sum(expit(Z), axis=1)
        return np.sum(np.maximum(Z, 0.0), axis=1)

    def _act_derivative(self, Z):
        if self.activation == "quadratic":
            return 2.0 * Z
        if self.activation == "sigmoid":
            S = expit(Z)
            return S * (1.0 - S)
        # rectifier subgradient, 0 at the kink
        return (Z > 0).astype(float)

    def jacobian(self, theta):
        U = self.unpack(theta)
        D = self._act_derivative(self.design @ U)  # (m, r)
        # dg_i/dU_jk = q'(z_ik) x_ij
        return (self.design[:, :, None] * D[:, None, :]).reshape(self.m, self.param_dim)

    def values_and_unit_derivatives(self, theta):
        """Fitted values and per-unit activation derivatives, one pass."""
        Z = self.design @ self.unpack(theta)
        if self.activation == "quadratic":
            q = np.sum(Z * Z, axis=1)
        elif self.activation == "sigmoid":
            S = expit(Z)
            return np.sum(S, axis=1), S * (1.0 - S)
        else:
            return np.sum(np.maximum(Z, 0.0), axis=1), (Z > 0).astype(float)
        return q, 2.0 * Z

    def subset(self, rows):
        """Model restricted to a subset of design rows (leave-out fits)."""
        sub = OneLayerNNModel(self.design[np.asarray(rows, int)], self.r, self.activation)
        return sub

    @property
    def dof(self):
        rank = self.claimed_char_rank
        if rank is None:
            # heuristic convention for the rectifier
            rank = self.d * self.r
        return self.m - rank


def sensing_values(design, U):
    """<x_i x_i^T, U U^T> for every design row; equals the quadratic map."""
    Z = np.asarray(design, float) @ np.asarray(U, float)
    return np.sum(Z * Z, axis=1)
