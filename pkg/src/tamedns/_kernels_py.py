"""Pure numpy implementations of the hot kernels.

Every function here has a twin of the same signature in ``_kernels.pyx``.
Outputs are written into caller-supplied arrays so both backends share the
allocation pattern of the solver loop.
"""

import numpy as np

TWO_PI = 2.0 * np.pi

# (i, j) -> slot of u_i u_j in the 6-component symmetric flux block
SYM_SLOT = ((0, 1, 2), (1, 3, 4), (2, 4, 5))


def taming(r, N):
    """Evaluate g_N elementwise (quintic blend on (N, N+1))."""
    r = np.asarray(r, dtype=float)
    s = np.clip(r - N, 0.0, 1.0)
    blend = s * s * s * (6.0 + s * (-8.0 + 3.0 * s))
    return np.where(r >= N + 1.0, r - N, np.where(r <= N, 0.0, blend))


def tamed_flux(u, N, out):
    """Fill ``out[0:6]`` with u_i u_j (i <= j) and ``out[6:9]`` with g_N(|u|^2) u.

    Args:
        u: real array (3, n, n, n), velocity on the physical grid.
        N: taming threshold.
        out: real array (9, n, n, n), overwritten.
    """
    np.multiply(u[0], u[0], out=out[0])
    np.multiply(u[0], u[1], out=out[1])
    np.multiply(u[0], u[2], out=out[2])
    np.multiply(u[1], u[1], out=out[3])
    np.multiply(u[1], u[2], out=out[4])
    np.multiply(u[2], u[2], out=out[5])
    g = taming(out[0] + out[3] + out[5], N)
    np.multiply(g, u, out=out[6:9])
    return out


def advect(u, grad, out):
    """out_i = sum_j u_j * grad[3*i + j] (the (u . grad) v product)."""
    for i in range(3):
        np.multiply(u[0], grad[3 * i], out=out[i])
        out[i] += u[1] * grad[3 * i + 1]
        out[i] += u[2] * grad[3 * i + 2]
    return out


def leray(c, k1, k2, k3, out):
    """Project spectral coefficients onto divergence-free, mean-zero fields.

    ``k1``, ``k2``, ``k3`` are 1-D integer-valued wavenumber axes of the
    half-spectrum layout; Nyquist entries must already be zeroed by the caller.
    """
    K1 = k1[:, None, None]
    K2 = k2[None, :, None]
    K3 = k3[None, None, :]
    ksq = K1 * K1 + K2 * K2 + K3 * K3
    inv = np.divide(1.0, ksq, out=np.zeros_like(ksq), where=ksq > 0)
    dot = (K1 * c[0] + K2 * c[1] + K3 * c[2]) * inv
    out[0] = c[0] - K1 * dot
    out[1] = c[1] - K2 * dot
    out[2] = c[2] - K3 * dot
    out[:, 0, 0, 0] = 0.0
    return out


def assemble_drift(fh, k1, k2, k3, mask, out):
    """Combine transformed fluxes into the projected, masked nonlinear drift.

    out = -P[ mask * (2 pi i k_j (u_i u_j)^ + (g_N u)^_i) ]
    """
    K = (k1[:, None, None], k2[None, :, None], k3[None, None, :])
    tmp = np.empty_like(out)
    for i in range(3):
        s = SYM_SLOT[i]
        conv = K[0] * fh[s[0]] + K[1] * fh[s[1]] + K[2] * fh[s[2]]
        tmp[i] = (1j * TWO_PI) * conv + fh[6 + i]
    tmp *= mask
    leray(tmp, k1, k2, k3, out)
    np.negative(out, out=out)
    return out
