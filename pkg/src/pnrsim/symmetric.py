"""Permutation-symmetric encoding for arrays of identical elements.

For n_D identical three-level elements (ground, excited, shelf) jointly
coupled to one propagating mode, plus n_A identical two-level register
stages, dynamics launched from a permutation-invariant state stays
permutation invariant. The density matrix is then fully described by
occupation classes of single-site Liouville types, so the representation
size is polynomial in n_D and n_A instead of exponential. The encoding
is exact, not an approximation; tests compare it against the full tensor
product on small systems.

Element sites only ever occupy five types: both-sides ground g = (0, 0),
ket-side excited k = (1, 0), bra-side excited b = (0, 1), both-sides
excited e = (1, 1), and both-sides shelved C. Shelf coherences never
develop because shelving and register transfer are incoherent. Register
stages occupy two types, ag and ae. Class vectors are normalized
permutation sums, so a one-site move src -> dst carries the bosonic
factor sqrt(n_src (n_dst + 1)).

The register-transfer sandwich lowers a C site and raises a register
stage simultaneously. It must be built in one fused pass: composing the
two one-body moves as a matrix product would route through intermediate
classes that the excitation cap prunes away and silently lose the flow.
"""

from __future__ import annotations

from itertools import product
from math import factorial

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .liouville import EngineView

_DIAG_OBSERVABLES = ("population", "ground", "excited", "shelved", "registered")


def enumerate_classes(n_elements, n_registers, exc_cap):
    """All type-occupation classes reachable below the excitation cap.

    Returns {(n_k, n_b, n_e, n_C, a): index}. Both the ket-side and the
    bra-side excitation (counting shelved sites and set registers) are
    capped, which is exact for drive members that never hold more than
    exc_cap photons on either side.
    """
    out = {}
    for nk, nb, ne, nc in product(range(exc_cap + 1), repeat=4):
        if nk + nb + ne + nc > n_elements:
            continue
        ket = nk + ne + nc
        bra = nb + ne + nc
        for a in range(min(n_registers, exc_cap) + 1):
            if ket + a > exc_cap or bra + a > exc_cap:
                continue
            out[(nk, nb, ne, nc, a)] = len(out)
    return out


class SymmetricLiouvillian:
    """Generator of the symmetric model in the class basis.

    gamma, Gamma, k_transfer are amplitudes (their squares are rates);
    Delta is the register reset rate; detuning shifts the element
    transition relative to the drive carrier. Channels carry the same
    tags as the tensor builders: ABSORB (joint coupling to the mode),
    SHELVE, TRANSFER, RESET.
    """

    def __init__(self, n_elements, n_registers, gamma, Gamma, k_transfer=0.0,
                 Delta=0.0, detuning=0.0, exc_cap=1):
        if n_elements < 1:
            raise ConfigError(f"need at least one element, got {n_elements}")
        if n_registers < 0:
            raise ConfigError(f"negative register count {n_registers}")
        if exc_cap < 1:
            raise ConfigError(f"excitation cap must be >= 1, got {exc_cap}")
        if n_registers == 0 and k_transfer:
            raise ConfigError("transfer amplitude given but there are no registers")
        self.n_elements = int(n_elements)
        self.n_registers = int(n_registers)
        self.gamma = float(gamma)
        self.Gamma = float(Gamma)
        self.k_transfer = float(k_transfer)
        self.Delta = float(Delta)
        self.detuning = float(detuning)
        self.exc_cap = int(exc_cap)

        cls = enumerate_classes(self.n_elements, self.n_registers, self.exc_cap)
        self.classes = cls
        self.dim = len(cls)
        self._build()

    # one-body moves -------------------------------------------------

    def _element_move(self, dst, src):
        """Transfer matrix for one element site changing type src -> dst."""
        n_d = self.n_elements
        rows, cols, vals = [], [], []
        for c, i in self.classes.items():
            occ = dict(zip("kbeC", c[:4]))
            occ["g"] = n_d - sum(c[:4])
            if occ[src] == 0:
                continue
            new = dict(occ)
            new[src] -= 1
            new[dst] += 1
            c2 = (new["k"], new["b"], new["e"], new["C"], c[4])
            if c2 not in self.classes:
                continue
            rows.append(self.classes[c2])
            cols.append(i)
            vals.append(np.sqrt(occ[src] * new[dst]))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def _register_move(self, dst, src):
        rows, cols, vals = [], [], []
        for c, i in self.classes.items():
            a = c[4]
            n_src = a if src == "ae" else self.n_registers - a
            if n_src == 0:
                continue
            a2 = a + (1 if dst == "ae" else -1)
            c2 = c[:4] + (a2,)
            if c2 not in self.classes:
                continue
            n_dst_after = a2 if dst == "ae" else self.n_registers - a2
            rows.append(self.classes[c2])
            cols.append(i)
            vals.append(np.sqrt(n_src * n_dst_after))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def _count(self, which):
        d = np.zeros(self.dim)
        for c, i in self.classes.items():
            occ = dict(zip("kbeC", c[:4]))
            occ["g"] = self.n_elements - sum(c[:4])
            occ["ae"] = c[4]
            occ["ag"] = self.n_registers - c[4]
            d[i] = occ[which]
        return sp.diags(d).tocsr()

    def _transfer_sandwich(self):
        """Fused two-species sandwich: one C site resets to ground while
        one register stage sets, with both bosonic factors. See the
        module docstring for why this cannot be a matrix product."""
        n_d, n_a = self.n_elements, self.n_registers
        rows, cols, vals = [], [], []
        for c, i in self.classes.items():
            nk, nb, ne, nc, a = c
            if nc == 0 or a >= n_a:
                continue
            ng = n_d - nk - nb - ne - nc
            c2 = (nk, nb, ne, nc - 1, a + 1)
            if c2 not in self.classes:
                continue
            rows.append(self.classes[c2])
            cols.append(i)
            vals.append(np.sqrt(nc * (ng + 1)) * np.sqrt((n_a - a) * (a + 1)))
        m = sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))
        return self.k_transfer ** 2 * m

    def _build(self):
        g2 = self.gamma ** 2
        G2 = self.Gamma ** 2
        T = self._element_move
        Nt = self._count

        # joint coupling to the mode: left/right multiplications by the
        # collective lowering operator and its dagger
        lm_l = self.gamma * (T("g", "k") + T("b", "e"))
        rm_l = self.gamma * (T("b", "g") + T("e", "k"))
        lm_ld = self.gamma * (T("k", "g") + T("e", "b"))
        rm_ld = self.gamma * (T("k", "e") + T("g", "b"))
        self._field_ket = (rm_ld - lm_ld).tocsr()
        self._field_bra = (lm_l - rm_l).tocsr()

        sandwiches = {}
        sandwiches["ABSORB"] = (lm_l @ rm_ld).tocsr()
        g = -1j * self.detuning * (Nt("k") - Nt("b"))
        g = g + sandwiches["ABSORB"] - 0.5 * (lm_ld @ lm_l) - 0.5 * (rm_l @ rm_ld)

        sandwiches["SHELVE"] = (G2 * T("C", "e")).tocsr()
        g = g + sandwiches["SHELVE"] - G2 * Nt("e") - 0.5 * G2 * (Nt("k") + Nt("b"))

        if self.n_registers > 0:
            sandwiches["TRANSFER"] = self._transfer_sandwich()
            g = g + sandwiches["TRANSFER"] - self.k_transfer ** 2 * (Nt("C") @ Nt("ag"))
            sandwiches["RESET"] = (self.Delta * self._register_move("ag", "ae")).tocsr()
            g = g + sandwiches["RESET"] - self.Delta * Nt("ae")

        self._sandwiches = sandwiches
        self.generator = g.tocsr()

        # trace and diagonal observables live on diagonal-type classes;
        # a normalized class vector contributes sqrt(multiplicity)
        tr = np.zeros(self.dim)
        self._diag_weights = {}
        counts = {name: np.zeros(self.dim) for name in _DIAG_OBSERVABLES}
        for c, i in self.classes.items():
            nk, nb, ne, nc, a = c
            if nk or nb:
                continue
            ng = self.n_elements - ne - nc
            mult_d = factorial(self.n_elements) // (
                factorial(ng) * factorial(ne) * factorial(nc))
            mult_a = factorial(self.n_registers) // (
                factorial(a) * factorial(self.n_registers - a))
            w = np.sqrt(mult_d * mult_a)
            tr[i] = w
            counts["population"][i] = w
            counts["ground"][i] = ng * w
            counts["excited"][i] = ne * w
            counts["shelved"][i] = nc * w
            counts["registered"][i] = a * w
        self.trace_row = tr.astype(complex)
        self._rows = {k: v.astype(complex) for k, v in counts.items()}

        # bra <-> ket swap permutation, for hermiticity diagnostics
        perm = np.empty(self.dim, dtype=np.int64)
        for c, i in self.classes.items():
            nk, nb, ne, nc, a = c
            perm[i] = self.classes[(nb, nk, ne, nc, a)]
        self._adjoint_perm = perm

        x0 = np.zeros(self.dim, dtype=complex)
        x0[self.classes[(0, 0, 0, 0, 0)]] = 1.0
        self.ground_state = x0

    # engine interface -----------------------------------------------

    @property
    def channel_tags(self):
        return tuple(self._sandwiches)

    def jump_sum(self, tags):
        if isinstance(tags, str):
            tags = (tags,)
        j = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for tag in tags:
            if tag not in self._sandwiches:
                raise ConfigError(
                    f"no channel tagged {tag!r}; have {sorted(self._sandwiches)}")
            j = j + self._sandwiches[tag]
        return j.tocsr()

    def observable_row(self, name):
        """Row vector giving tr(O rho) for a per-site count observable."""
        if name not in self._rows:
            raise ConfigError(f"unknown observable {name!r}; "
                              f"have {sorted(self._rows)}")
        return self._rows[name]

    def engine_view(self, rho0=None):
        if rho0 is None:
            y0 = self.ground_state
        else:
            y0 = np.asarray(rho0, dtype=complex).reshape(-1)
            if y0.size != self.dim:
                raise ConfigError(
                    f"initial class vector has length {y0.size}, expected {self.dim}")
        perm = self._adjoint_perm

        def adjoint(y):
            return np.conj(y[..., perm])

        return EngineView(
            vec_dim=self.dim,
            n_sectors=1,
            g0=self.generator,
            jump=None,
            field_ket=self._field_ket,
            field_bra=self._field_bra,
            trace_row=self.trace_row,
            default_state=y0,
            adjoint=adjoint,
            dense_shape=None,
        )
