"""Pure-numpy kernel: Dormand-Prince 5(4) over one constant-control segment.

Mirrors the compiled kernel in ``_core.pyx`` step for step; the two are
interchangeable through :func:`integrate_segment`.
"""

from __future__ import annotations

import numpy as np

NAME = "python"

# Dormand-Prince tableau (autonomous: the nodes c_i are not needed).
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

OK, BLOWUP, STEP_FAILURE, NONFINITE = 0, 1, 2, 3


def cutoff(n: int, dealias: bool) -> int:
    """Largest retained wavenumber; the Nyquist mode is always dropped."""
    return int(np.ceil(n / 3)) - 1 if dealias else n // 2 - 1


class Operator:
    """Spectral multipliers for a fixed grid size and configuration."""

    def __init__(self, n: int, kappa: float, dealias: bool):
        self.n = n
        k = np.arange(n // 2 + 1, dtype=np.float64)
        self.mask = (k <= cutoff(n, dealias)).astype(np.float64)
        self.ik = 1j * k * self.mask
        self.k2 = -(k**2) * self.mask
        self.inv_helm = 1.0 / (1.0 + k**2)
        self.lin = -2.0 * kappa * self.inv_helm * self.ik
        self.k = k

    def rhs_hat(self, u: np.ndarray, phi: np.ndarray, f_hat: np.ndarray):
        """Return ``(rhs, U_hat)`` where ``U_hat`` is the transform of ``u + phi``."""
        n = self.n
        U_hat = np.fft.rfft(u + phi)
        Ux = np.fft.irfft(self.ik * U_hat, n)
        Uxx = np.fft.irfft(self.k2 * U_hat, n)
        Ud = np.fft.irfft(self.mask * U_hat, n)
        P1 = np.fft.rfft(Ud * Ux)
        P2 = np.fft.rfft(Ux * Uxx)
        R = self.mask * (self.lin * U_hat - P1 - self.inv_helm * (2.0 * P1 + P2)) + f_hat
        return np.fft.irfft(R, n), U_hat

    def hs_norm_hat(self, c_hat: np.ndarray, s: float) -> float:
        """H^s norm from an unnormalized rfft (Nyquist mode at half weight)."""
        w = (1.0 + self.k**2) ** s * np.abs(c_hat / self.n) ** 2
        w[1:] *= 2.0
        if self.n % 2 == 0:
            w[-1] *= 0.5
        return float(np.sqrt(np.sum(w)))


def prepare_forcing(op: Operator, f: np.ndarray) -> np.ndarray:
    return op.mask * np.fft.rfft(f)


def rhs(u, phi, f, kappa: float, dealias: bool) -> np.ndarray:
    op = Operator(u.shape[0], kappa, dealias)
    out, _ = op.rhs_hat(np.asarray(u, float), np.asarray(phi, float), prepare_forcing(op, np.asarray(f, float)))
    return out


def initial_step(y, k1, rtol, atol) -> float:
    sc = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / sc) ** 2))
    d1 = np.sqrt(np.mean((k1 / sc) ** 2))
    if d0 < 1e-5 or d1 < 1e-5:
        return 1e-6
    return 0.01 * d0 / d1


def integrate_segment(
    u0,
    phi,
    f,
    T: float,
    dt0: float,
    rtol: float,
    atol: float,
    dt_max: float,
    dt_min: float,
    kappa: float,
    dealias: bool,
    blowup_cap: float,
    s_monitor: float,
):
    """Advance ``u0`` by ``T`` with constant shift ``phi`` and forcing ``f``.

    Returns ``(u, status, t, dt_next, err_sum, steps, rejected, norm)``.
    ``err_sum`` accumulates the max-norm of the embedded local error
    estimates over accepted steps; ``norm`` is the last monitored H^s norm.
    """
    y = np.array(u0, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    n = y.shape[0]
    op = Operator(n, kappa, dealias)
    f_hat = prepare_forcing(op, np.asarray(f, dtype=np.float64))
    phi_hat = np.fft.rfft(phi)

    t = 0.0
    steps = rejected = 0
    err_sum = 0.0
    k1, U_hat = op.rhs_hat(y, phi, f_hat)
    norm = op.hs_norm_hat(U_hat - phi_hat, s_monitor)
    if T <= 0.0:
        return y, OK, 0.0, dt0, 0.0, 0, 0, norm
    dt = dt0 if dt0 > 0.0 else initial_step(y, k1, rtol, atol)
    dt = min(dt, dt_max)

    while t < T:
        last = False
        h = dt
        if t + h >= T:
            h = T - t
            last = True
        k2, _ = op.rhs_hat(y + h * (A21 * k1), phi, f_hat)
        k3, _ = op.rhs_hat(y + h * (A31 * k1 + A32 * k2), phi, f_hat)
        k4, _ = op.rhs_hat(y + h * (A41 * k1 + A42 * k2 + A43 * k3), phi, f_hat)
        k5, _ = op.rhs_hat(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), phi, f_hat)
        k6, _ = op.rhs_hat(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), phi, f_hat)
        y_new = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        if not np.all(np.isfinite(y_new)):
            return y, NONFINITE, t, h, err_sum, steps, rejected, norm
        k7, U_hat = op.rhs_hat(y_new, phi, f_hat)
        e = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((e / sc) ** 2)))
        if not np.isfinite(err):
            return y, NONFINITE, t, h, err_sum, steps, rejected, norm
        if err <= 1.0:
            t = T if last else t + h
            y, k1 = y_new, k7
            steps += 1
            err_sum += float(np.max(np.abs(e)))
            norm = op.hs_norm_hat(U_hat - phi_hat, s_monitor)
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err**-0.2))
            if not last:  # a truncated final step leaves the hint unchanged
                dt = min(dt_max, h * fac)
            if norm > blowup_cap:
                return y, BLOWUP, t, dt, err_sum, steps, rejected, norm
        else:
            rejected += 1
            dt = h * max(0.2, 0.9 * err**-0.2)
            if dt < dt_min:
                return y, STEP_FAILURE, t, dt, err_sum, steps, rejected, norm
    return y, OK, t, dt, err_sum, steps, rejected, norm
