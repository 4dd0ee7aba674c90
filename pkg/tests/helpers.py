"""Shared test utilities.

The dense reference generator here is built independently of the package's
sparse assembly (plain numpy kron, row-major vec) so agreement between the
two is a real cross-check, not a tautology.
"""

import numpy as np
import scipy.linalg as la

from pnrsim.architectures import (DosModel, build_array, build_band_element,
                                  build_pnr, build_single_element)


def dense_generator(hamiltonian, collapse_ops):
    """Dense Lindblad superoperator for vec(rho) stacked by rows."""
    ops = [np.asarray(a, dtype=complex) for a in collapse_ops]
    d = ops[0].shape[0] if ops else np.asarray(hamiltonian).shape[0]
    eye = np.eye(d)
    g = np.zeros((d * d, d * d), dtype=complex)
    if hamiltonian is not None:
        h = np.asarray(hamiltonian, dtype=complex)
        g += -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for a in ops:
        ada = a.conj().T @ a
        g += np.kron(a, a.conj()) - 0.5 * (np.kron(ada, eye) + np.kron(eye, ada.T))
    return g


def liouvillian_dense_parts(liou):
    """(H, [collapse matrices]) of an assembled tensor Liouvillian,
    amplifier channels included with their sqrt(2k) prefactor."""
    h = liou.hamiltonian.matrix.toarray() if liou.hamiltonian is not None else None
    ops = [c.op.matrix.toarray() for c in liou.channels]
    ops += [np.sqrt(2.0 * a.k) * a.op.matrix.toarray() for a in liou.amps]
    return h, ops


def expm_evolve(liou, rho0, t):
    """Reference evolution exp(G t) rho0 through the dense generator."""
    h, ops = liouvillian_dense_parts(liou)
    g = dense_generator(h, ops)
    d = rho0.shape[0]
    return (la.expm(g * t) @ np.asarray(rho0, dtype=complex).reshape(-1)).reshape(d, d)


def random_density(rng, d):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_architecture(rng):
    """Small random instance of any tensor architecture kind.

    Rates land in a moderate band so none of the dynamics is stiff; sizes
    stay small enough that the counting run plus the unresolved reference
    run are cheap.
    """
    kind = rng.choice(["single", "band", "array", "pnr"])
    gamma = float(rng.uniform(0.3, 1.2))
    Gamma = float(rng.uniform(0.3, 1.2))
    Delta = float(rng.choice([0.0, rng.uniform(0.1, 0.5)]))
    dw = float(rng.uniform(-0.5, 0.5))
    k = float(rng.choice([0.0, rng.uniform(0.1, 0.5)]))
    if kind == "single":
        return build_single_element(gamma, Gamma, Delta=Delta, k=k, delta_omega=dw)
    if kind == "band":
        dos = DosModel(rng.choice(["lorentzian", "flat2d", "vanhove1d"]), width=1.0)
        return build_band_element(dos, int(rng.integers(2, 4)), gamma, Gamma,
                                  Delta=Delta, k=k, delta_omega=dw)
    if kind == "array":
        return build_array(2, gamma, Gamma, Delta=Delta, k=k, delta_omega=dw)
    return build_pnr(int(rng.integers(1, 3)), 1, gamma=gamma, Gamma=Gamma,
                     k_A=float(rng.uniform(0.4, 1.2)), Delta=Delta, k=k,
                     delta_omega=dw)
