"""Independent reference for the rho-weighted product by direct quadrature."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _legendre(nodes):
    return np.polynomial.legendre.leggauss(nodes)


def rho_weighted_quadrature(A, rho, nodes=1000):
    """Gauss-Legendre evaluation of int_0^1 rho^l A rho^(1-l) dl using LAPACK eigh."""
    p, V = np.linalg.eigh(rho)
    x, w = _legendre(nodes)
    lam, w = 0.5 * (x + 1.0), 0.5 * w
    At = V.conj().T @ A @ V
    # weight matrix sum_k w_k p_m^l_k p_n^(1-l_k)
    W = (w[:, None] * p[None, :] ** lam[:, None]).T @ (p[None, :] ** (1.0 - lam[:, None]))
    return V @ (At * W) @ V.conj().T


def rho_weighted_midpoint(A, rho, nodes=1000):
    """Plain midpoint rule, evaluated one matrix power at a time."""
    p, V = np.linalg.eigh(rho)
    out = np.zeros_like(A, dtype=complex)
    for k in range(nodes):
        lam = (k + 0.5) / nodes
        out += (V * p**lam) @ V.conj().T @ A @ (V * p ** (1 - lam)) @ V.conj().T
    return out / nodes
