"""Compiled inner loop for the linear Maxwell-Bloch propagation.

Bloch:  d sigma_k / dt = -(i delta_k + gamma) sigma_k + i E
Field:  dE / dzeta      = i kappa sum_k p_k sigma_k

Time uses an exponential integrator with E linear over each step; space uses
the trapezoid rule, solved implicitly for the new field at each slice.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _phi12(z):
    if abs(z) < 1e-4:
        p1 = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
        p2 = 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    else:
        ez = np.exp(z)
        p1 = (ez - 1.0) / z
        p2 = (ez - 1.0 - z) / (z * z)
    return p1, p2


@numba.njit(cache=True)
def propagate(e_in, sigma, pop, detunings, gamma, dt, kappa):
    """Advance ``sigma`` (nz, nk) in place under the boundary field ``e_in``.

    Sample 0 of ``e_in`` is the field at the current time; the returned array
    holds the field leaving the last slice at every sample.
    """
    nt = e_in.shape[0]
    nz, nk = pop.shape
    dzeta = 1.0 / (nz - 1)
    half = 0.5 * dzeta * 1j * kappa
    ez = np.empty(nk, np.complex128)
    ca = np.empty(nk, np.complex128)
    cb = np.empty(nk, np.complex128)
    for k in range(nk):
        z = complex(-gamma * dt, -detunings[k] * dt)
        p1, p2 = _phi12(z)
        ez[k] = np.exp(z)
        ca[k] = 1j * dt * (p1 - p2)
        cb[k] = 1j * dt * p2
    c = np.zeros(nz, np.complex128)
    for j in range(nz):
        s = 0j
        for k in range(nk):
            s += pop[j, k] * cb[k]
        c[j] = s

    # field profile consistent with the initial coherence
    E = np.empty(nz, np.complex128)
    P = np.empty(nz, np.complex128)
    for j in range(nz):
        s = 0j
        for k in range(nk):
            s += pop[j, k] * sigma[j, k]
        P[j] = s
    E[0] = e_in[0]
    for j in range(nz - 1):
        E[j + 1] = E[j] + half * (P[j] + P[j + 1])
    out = np.empty(nt, np.complex128)
    out[0] = E[nz - 1]

    for n in range(1, nt):
        p_prev = 0j
        e_prev = e_in[n]
        for j in range(nz):
            e_old = E[j]
            q = 0j
            for k in range(nk):
                sigma[j, k] = ez[k] * sigma[j, k] + ca[k] * e_old
                q += pop[j, k] * sigma[j, k]
            if j == 0:
                e_new = e_in[n]
            else:
                e_new = (e_prev + half * (p_prev + q)) / (1.0 - half * c[j])
            for k in range(nk):
                sigma[j, k] += cb[k] * e_new
            p_prev = q + c[j] * e_new
            E[j] = e_new
            e_prev = e_new
        out[n] = E[nz - 1]
    return out
