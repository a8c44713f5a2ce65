"""Hartree nonlinearity f(u) = (|x|^-4 * |u|^2) u and its differential.

All functions take a convolution callable ``conv`` mapping real samples to
real samples (usually ``RieszKernel.convolve``).  Because ``conv`` is a
fixed linear map, the polarization identities hold to round-off.
"""
from __future__ import annotations

import numpy as np


def f_apply(conv, u):
    u = np.asarray(u)
    return conv(np.abs(u) ** 2) * u


def fprime_apply(conv, u, g):
    """f'(u)g = (K*|u|^2) g + 2 (K*Re(conj(u) g)) u.  R-linear in g."""
    u = np.asarray(u)
    g = np.asarray(g)
    return conv(np.abs(u) ** 2) * g + 2.0 * conv(np.real(np.conj(u) * g)) * u


def F_density(conv, u):
    """F(u) = 1/4 (K*|u|^2)|u|^2."""
    rho = np.abs(np.asarray(u)) ** 2
    return 0.25 * conv(rho) * rho


def f_defect(conv, z1, z2):
    """f(z1+z2) - f(z1) - f(z2) - f'(z1)z2 - f'(z2)z1, zero up to round-off."""
    return (f_apply(conv, z1 + z2) - f_apply(conv, z1) - f_apply(conv, z2)
            - fprime_apply(conv, z1, z2) - fprime_apply(conv, z2, z1))


def F_defect(conv, z1, z2):
    """Pointwise F(z1+z2) - F(z1) - F(z2) minus its expansion in cross terms."""
    r1, r2 = np.abs(z1) ** 2, np.abs(z2) ** 2
    x = np.real(z1 * np.conj(z2))
    k1, k2, kx = conv(r1), conv(r2), conv(x)
    expansion = (0.5 * k1 * x + 0.5 * kx * r1 + 0.5 * k2 * x + 0.5 * kx * r2
                 + 0.25 * k1 * r2 + 0.25 * k2 * r1 + kx * x)
    return F_density(conv, z1 + z2) - F_density(conv, z1) - F_density(conv, z2) - expansion
