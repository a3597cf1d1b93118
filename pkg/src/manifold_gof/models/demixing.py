"""Blind demixing of Gaussian sources through sensor cross-correlations.

K sources s_k(t) = rho_k exp(-alpha_k t^2) reach N sensors with per-sensor
delays tau_{n,k}.  The frequency-domain cross-correlation between sensors n
and m at integer frequency f has the closed form

    R_{n,m}(f) = sum_{k,l} rho_k rho_l exp(2 pi i f (tau_{n,l} - tau_{m,k}))
                 * pi / sqrt(alpha_k alpha_l)
                 * exp(-pi^2 f^2 (1/alpha_k + 1/alpha_l)),

and the model maps xi = (rho_1..K, alpha_1..K, tau_{1,1}..tau_{N,K}) to the
real parts followed by the imaginary parts of R on an observed set of
(n, m, f) triples.  The parameter count is 2K + NK; at generic points the
Jacobian rank is 2K + NK - 1 (delays enter only through differences, so a
common shift is invisible).
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError, InvalidParameterError
from ..model import ManifoldModel

_LOG_PI = np.log(np.pi)


def half_grid(sensors, grid_len):
    """(n, m, f) triples with n <= m; drops the Hermitian-redundant half."""
    return np.array([(n, m, f)
                     for n in range(sensors)
                     for m in range(sensors) if n <= m
                     for f in range(grid_len)], dtype=int)


def full_grid(sensors, grid_len):
    return np.array([(n, m, f)
                     for n in range(sensors)
                     for m in range(sensors)
                     for f in range(grid_len)], dtype=int)


class DemixingModel(ManifoldModel):
    """Cross-correlation tensor model for source-count selection.

    ``theta`` is the natural coordinate vector [rho (K), alpha (K),
    tau (N x K row-major)]; fitting reparameterizes alpha through its log,
    but Jacobians here are in natural coordinates.  Output layout is all
    real parts on the observed triples, then all imaginary parts.
    """

    def __init__(self, sensors, sources, grid_len=16, omega="half"):
        if sources < 1:
            raise InvalidParameterError("sources must be >= 1")
        if grid_len < 2:
            raise InvalidParameterError("grid_len must be >= 2")
        self.sensors, self.sources, self.grid_len = int(sensors), int(sources), int(grid_len)
        if isinstance(omega, str):
            if omega == "half":
                omega = half_grid(sensors, grid_len)
            elif omega == "full":
                omega = full_grid(sensors, grid_len)
            else:
                raise InvalidParameterError(f"omega must be 'half', 'full', or triples, got {omega!r}")
        omega = np.asarray(omega, dtype=int)
        if omega.ndim != 2 or omega.shape[1] != 3 or omega.shape[0] == 0:
            raise InvalidInputError(f"omega must be a nonempty (nobs, 3) array, got {omega.shape}")
        if (omega[:, :2].min() < 0 or omega[:, :2].max() >= sensors
                or omega[:, 2].min() < 0 or omega[:, 2].max() >= grid_len):
            raise InvalidInputError("omega contains out-of-range triples")
        self.omega = omega
        N, K = self.sensors, self.sources
        self.param_dim = 2 * K + N * K
        self.obs_dim = 2 * omega.shape[0]
        self.claimed_char_rank = 2 * K + N * K - 1
        self.equilibrate_rank = True
        # imaginary parts vanish identically at n == m (Hermitian symmetry)
        # and at f == 0 (all phases zero); mark them so rank estimation does
        # not rescale their roundoff into fake directions
        imag_zero = (omega[:, 0] == omega[:, 1]) | (omega[:, 2] == 0)
        self.structural_zero_mask = np.concatenate(
            [np.zeros(omega.shape[0], bool), imag_zero])

    @property
    def num_observed(self):
        return self.omega.shape[0]

    @property
    def dof(self):
        return self.obs_dim - self.claimed_char_rank

    def unpack(self, theta):
        theta = self._check_theta(theta)
        K, N = self.sources, self.sensors
        rho = theta[:K]
        alpha = theta[K: 2 * K]
        tau = theta[2 * K:].reshape(N, K)
        if np.any(alpha <= 0):
            raise InvalidParameterError("source widths alpha must be positive")
        return rho, alpha, tau

    @staticmethod
    def pack(rho, alpha, tau):
        return np.concatenate([np.ravel(rho), np.ravel(alpha), np.ravel(tau)])

    def sample_param(self, rng):
        """Generic generator: rho, alpha ~ U[10, 11], tau ~ U[-2.5, 2.5]."""
        K, N = self.sources, self.sensors
        return self.pack(rng.uniform(10.0, 11.0, K),
                         rng.uniform(10.0, 11.0, K),
                         rng.uniform(-2.5, 2.5, (N, K)))

    # -- kernels ---------------------------------------------------------

    def _parts(self, theta, want_jacobian):
        rho, alpha, tau = self.unpack(theta)
        K, N, T = self.sources, self.sensors, self.grid_len
        n_idx, m_idx = self.omega[:, 0], self.omega[:, 1]
        f = self.omega[:, 2].astype(float)
        inv_a = 1.0 / alpha
        # amplitude in log space: large f^2 / alpha underflows cleanly to 0
        log_amp = (_LOG_PI - 0.5 * (np.log(alpha)[:, None] + np.log(alpha)[None, :])
                   )[None, :, :] - (np.pi ** 2) * (f ** 2)[:, None, None] \
                  * (inv_a[:, None] + inv_a[None, :])[None, :, :]
        amp = np.exp(log_amp)                               # (nobs, K, K)
        W = (rho[:, None] * rho[None, :])[None, :, :] * amp
        # phase[obs, k, l] = 2 pi f (tau[n, l] - tau[m, k])
        ph = 2.0 * np.pi * f[:, None, None] * (tau[n_idx][:, None, :] - tau[m_idx][:, :, None])
        cos, sin = np.cos(ph), np.sin(ph)
        re = np.einsum("okl,okl->o", W, cos)
        im = np.einsum("okl,okl->o", W, sin)
        values = np.concatenate([re, im])
        if not want_jacobian:
            return values, None

        nobs = self.omega.shape[0]
        WC, WS = W * cos, W * sin
        AC, AS = amp * cos, amp * sin
        # magnitude derivative: the k0 column of rho appears in both slots
        dre_drho = np.einsum("okl,l->ok", AC, rho) + np.einsum("okl,k->ol", AC, rho)
        dim_drho = np.einsum("okl,l->ok", AS, rho) + np.einsum("okl,k->ol", AS, rho)
        # width derivative via the chain factor rho (-1/(2 alpha) + pi^2 f^2 / alpha^2)
        chain = rho[None, :] * (-0.5 * inv_a[None, :]
                                + (np.pi ** 2) * (f ** 2)[:, None] * inv_a[None, :] ** 2)
        dre_dalpha = dre_drho * chain
        dim_dalpha = dim_drho * chain
        # delay derivative: indicator on the sensor index, opposite signs on
        # the n and m slots
        twopif = 2.0 * np.pi * f
        re_n = -np.einsum("okl->ol", WS) * twopif[:, None]
        re_m = np.einsum("okl->ok", WS) * twopif[:, None]
        im_n = np.einsum("okl->ol", WC) * twopif[:, None]
        im_m = -np.einsum("okl->ok", WC) * twopif[:, None]
        dre_dtau = np.zeros((nobs, N, K))
        dim_dtau = np.zeros((nobs, N, K))
        obs = np.arange(nobs)
        np.add.at(dre_dtau, (obs, n_idx), re_n)
        np.add.at(dre_dtau, (obs, m_idx), re_m)
        np.add.at(dim_dtau, (obs, n_idx), im_n)
        np.add.at(dim_dtau, (obs, m_idx), im_m)
        J = np.concatenate([
            np.concatenate([dre_drho, dre_dalpha, dre_dtau.reshape(nobs, N * K)], axis=1),
            np.concatenate([dim_drho, dim_dalpha, dim_dtau.reshape(nobs, N * K)], axis=1),
        ], axis=0)
        return values, J

    def evaluate(self, theta):
        return self._parts(theta, want_jacobian=False)[0]

    def jacobian(self, theta):
        return self._parts(theta, want_jacobian=True)[1]

    def evaluate_and_jacobian(self, theta):
        return self._parts(theta, want_jacobian=True)
