"""Propagation of matter dynamics driven by few-photon wavepackets.

The driven state is represented by a grid of coupled members indexed by
(n, m), n and m running 0..n_max over the photon content of the input.
Member (n, m) obeys the undriven generator plus drive terms that pull in
members (n-1, m) and (n, m-1) with weights sqrt(n) E(t) and
sqrt(m) E*(t). Every diagonal member starts from the same initial matter
state; the physical state is recovered by summing members with the input
field's coefficient table.

When jumps of selected channels are counted, each member additionally
splits into sectors 0..max_count; counted jumps feed sector s into s+1
and the last sector collects "max_count or more". The whole grid is one
sparse linear ODE, integrated jointly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import ConfigError, NumericsError, ResourceLimitError
from .liouville import EngineView, vectorize
from .pulses import FieldInput
from .spaces import Operator

_METHODS = ("adaptive", "dop853", "trapezoid")


@dataclass(frozen=True)
class IntegratorOptions:
    """Knobs for the hierarchy integrator.

    method "adaptive" is an embedded Runge-Kutta pair; "dop853" is the
    higher-order variant for tight tolerances; "trapezoid" is an
    unconditionally stable fixed-step fallback for stiff generators
    (strong amplification), using `dt` as the step.
    """

    method: str = "adaptive"
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = np.inf
    dt: float = 1e-3
    n_points: int = 201
    store_states: bool = None
    max_store_bytes: int = 512 * 2 ** 20
    trace_tol: float = 1e-6

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {_METHODS}")
        if self.rtol <= 0 or self.atol <= 0 or self.dt <= 0:
            raise ConfigError("tolerances and dt must be positive")
        if self.n_points < 2:
            raise ConfigError("n_points must be at least 2")


def _member_wiring(n_max, which):
    """Sparse coupling matrix between members of the (n, m) grid.

    which = "ket": (n, m) <- (n-1, m) with weight sqrt(n).
    which = "bra": (n, m) <- (n, m-1) with weight sqrt(m).
    """
    np1 = n_max + 1
    rows, cols, vals = [], [], []
    for n in range(np1):
        for m in range(np1):
            g = n * np1 + m
            if which == "ket" and n >= 1:
                rows.append(g)
                cols.append((n - 1) * np1 + m)
                vals.append(np.sqrt(n))
            if which == "bra" and m >= 1:
                rows.append(g)
                cols.append(n * np1 + (m - 1))
                vals.append(np.sqrt(m))
    return sp.csr_matrix((vals, (rows, cols)), shape=(np1 * np1, np1 * np1))


def _sector_feed(n_sectors):
    """Counted jumps move sector s -> s+1; the last sector self-feeds so
    block-column sums reproduce the unresolved generator exactly."""
    rows = list(range(1, n_sectors)) + [n_sectors - 1]
    cols = list(range(0, n_sectors - 1)) + [n_sectors - 1]
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                         shape=(n_sectors, n_sectors))


class HierarchyState:
    """Snapshot of all members at one time, when states were stored."""

    def __init__(self, result, t_index):
        self._r = result
        self.t_index = int(t_index)
        self.t = float(result.t[t_index])
        self.n_max = result.n_max

    def member(self, n, m, sector=None):
        """Dense matrix of member (n, m), summed over sectors by default."""
        return self._r._member(self.t_index, n, m, sector)


@dataclass
class HierarchyResult:
    t: np.ndarray
    n_max: int
    n_sectors: int
    vec_dim: int
    field: FieldInput
    sector_traces: np.ndarray          # (n_max+1, n_max+1, n_sectors, nt)
    observables: dict
    states: np.ndarray                 # (nt, total) or None
    diagnostics: dict
    dense_shape: tuple = None
    _trace_row: np.ndarray = None
    _adjoint: object = None

    def count_probabilities(self):
        """Physical probability of each count sector over time, (S, nt)."""
        c = self.field.coefficients if self.field is not None else None
        if c is None:
            # undriven run: single member (0, 0)
            out = self.sector_traces[0, 0]
        else:
            out = np.einsum("nm,nmst->st", c, self.sector_traces)
        return np.real(out)

    def observable(self, name):
        """Physical expectation of a requested observable over time."""
        if name not in self.observables:
            raise ConfigError(f"observable {name!r} was not requested; "
                              f"have {sorted(self.observables)}")
        table = self.observables[name]
        if self.field is None:
            return table[0, 0].sum(axis=0)
        return np.einsum("nm,nmst->t", self.field.coefficients, table)

    def state_at(self, t_index=-1):
        if self.states is None:
            raise ConfigError("states were not stored; pass store_states=True")
        if t_index < 0:
            t_index += len(self.t)
        return HierarchyState(self, t_index)

    def _component(self, t_index, n, m, sector):
        np1 = self.n_max + 1
        g = n * np1 + m
        lo = (g * self.n_sectors + sector) * self.vec_dim
        return self.states[t_index, lo:lo + self.vec_dim]

    def _member_vec(self, t_index, n, m, sector=None):
        if self.states is None:
            raise ConfigError("states were not stored; pass store_states=True")
        if not (0 <= n <= self.n_max and 0 <= m <= self.n_max):
            raise ConfigError(f"member ({n}, {m}) outside grid 0..{self.n_max}")
        if sector is None:
            secs = range(self.n_sectors)
        else:
            secs = [int(sector)]
        y = np.zeros(self.vec_dim, dtype=complex)
        for s in secs:
            y += self._component(t_index, n, m, s)
        return y

    def _member(self, t_index, n, m, sector=None):
        y = self._member_vec(t_index, n, m, sector)
        if self.dense_shape is None:
            return y
        return y.reshape(self.dense_shape)

    def final_state(self):
        return self.state_at(-1)


def reduced_matter_state(state, field):
    """Physical matter density matrix at a snapshot: the coefficient-weighted
    sum of members. Hermiticity is restored by explicit symmetrization and
    the defect reported in the matrix is bounded by integration error."""
    c = field.coefficients
    if c.shape[0] - 1 > state.n_max:
        raise ConfigError(
            f"field holds up to {c.shape[0] - 1} photons but the run "
            f"integrated members only up to {state.n_max}")
    rho = None
    for n in range(c.shape[0]):
        for m in range(c.shape[1]):
            w = c[n, m]
            if w == 0:
                continue
            block = state.member(n, m)
            rho = w * block if rho is None else rho + w * block
    if rho.ndim != 2:
        raise ConfigError("reduced state needs a dense tensor encoding")
    return 0.5 * (rho + rho.conj().T)


def _assemble_blocks(ev, n_max):
    """Constant sparse blocks of the driven linear ODE plus the initial
    vector: undriven part a0, raising/lowering drive couplings am/ap
    (None when n_max is 0). Every diagonal member starts from the engine's
    default matter state in sector 0."""
    np1 = n_max + 1
    n_members = np1 * np1
    S = ev.n_sectors
    vd = ev.vec_dim
    if S > 1:
        if ev.jump is None:
            raise ConfigError("n_sectors > 1 but the engine has no jump part")
        sector_block = sp.kron(sp.identity(S), ev.g0) + sp.kron(_sector_feed(S), ev.jump)
    else:
        sector_block = ev.g0
    a0 = sp.kron(sp.identity(n_members), sector_block, format="csr")
    am = ap = None
    if n_max > 0:
        eye_s = sp.identity(S)
        am = sp.kron(_member_wiring(n_max, "ket"), sp.kron(eye_s, ev.field_ket),
                     format="csr")
        ap = sp.kron(_member_wiring(n_max, "bra"), sp.kron(eye_s, ev.field_bra),
                     format="csr")
    y0 = np.zeros(n_members * S * vd, dtype=complex)
    for n in range(np1):
        g = n * np1 + n
        lo = g * S * vd
        y0[lo:lo + vd] = ev.default_state
    return a0, am, ap, y0


def _resolve_engine(liou, rho0):
    if hasattr(liou, "engine_view"):
        ev = liou.engine_view(rho0)
    elif isinstance(liou, EngineView):
        ev = liou
    else:
        raise ConfigError(f"cannot integrate object of type {type(liou).__name__}")
    return ev


def integrate_hierarchy(liou, field, t_span=None, opts=None, *, rho0=None,
                        t_eval=None, observables=None):
    """Integrate the driven member grid of `liou` under the input `field`.

    liou: assembled Liouvillian, its counting resolution, a truncated or
        symmetry-reduced variant, or a bare EngineView.
    field: FieldInput (None integrates the undriven generator only).
    t_span: (t0, t1); defaults to the envelope support.
    observables: mapping name -> Operator (tensor encodings) or a raw
        row vector of length vec_dim.
    """
    opts = opts or IntegratorOptions()
    ev = _resolve_engine(liou, rho0)
    env = field.envelope if field is not None else None
    n_max = field.n_max if field is not None else 0
    if n_max > 0 and ev.field_ket is None:
        raise ConfigError("the generator has no field coupling operator "
                          "but the input carries photons")
    if t_span is None:
        if env is None:
            raise ConfigError("t_span is required when there is no envelope")
        t_span = env.support
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ConfigError(f"empty time span ({t0}, {t1})")

    np1 = n_max + 1
    n_members = np1 * np1
    S = ev.n_sectors
    vd = ev.vec_dim
    total = n_members * S * vd

    if t_eval is None:
        t_eval = np.linspace(t0, t1, opts.n_points)
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.ndim != 1 or np.any(np.diff(t_eval) < 0):
            raise ConfigError("t_eval must be a sorted 1d array")
        if t_eval[0] < t0 - 1e-12 or t_eval[-1] > t1 + 1e-12:
            raise ConfigError("t_eval must lie inside t_span")
    nt = len(t_eval)

    store = opts.store_states
    need = total * nt * 16
    if store is None:
        store = need <= opts.max_store_bytes
    elif store and need > opts.max_store_bytes:
        raise ResourceLimitError(
            f"storing {nt} states of size {total} needs {need / 2**20:.0f} MiB, "
            f"over the {opts.max_store_bytes / 2**20:.0f} MiB guard; raise "
            f"max_store_bytes or request fewer points")

    a0, am, ap, y0 = _assemble_blocks(ev, n_max)

    if am is not None:
        def rhs(t, y):
            out = a0 @ y
            e = env(t)
            if e != 0:
                out = out + e * (am @ y)
                out = out + np.conj(e) * (ap @ y)
            return out
    else:
        def rhs(t, y):
            return a0 @ y

    if opts.method in ("adaptive", "dop853"):
        method = "RK45" if opts.method == "adaptive" else "DOP853"
        sol = solve_ivp(rhs, (t0, t1), y0, method=method, t_eval=t_eval,
                        rtol=opts.rtol, atol=opts.atol, max_step=opts.max_step)
        if not sol.success:
            raise NumericsError(f"integration failed: {sol.message}")
        ys = sol.y.T.copy()
        nfev = int(sol.nfev)
    else:
        ys, nfev = _trapezoid(a0, am, ap, env, y0, t0, t1, t_eval, opts.dt)

    # per member and sector: trace and requested observable rows
    rows = {}
    if observables:
        for name, ob in observables.items():
            if isinstance(ob, Operator):
                rows[name] = np.asarray(ob.matrix.T.toarray(), dtype=complex).reshape(-1)
            else:
                row = np.asarray(ob, dtype=complex).reshape(-1)
                if row.size != vd:
                    raise ConfigError(
                        f"observable {name!r} row has length {row.size}, expected {vd}")
                rows[name] = row

    comp = ys.reshape(nt, n_members * S, vd)
    sector_traces = (comp @ ev.trace_row).reshape(nt, np1, np1, S)
    sector_traces = np.moveaxis(sector_traces, 0, -1)  # (np1, np1, S, nt)
    obs_tables = {}
    for name, row in rows.items():
        tab = (comp @ row).reshape(nt, np1, np1, S)
        obs_tables[name] = np.moveaxis(tab, 0, -1)

    result = HierarchyResult(
        t=t_eval, n_max=n_max, n_sectors=S, vec_dim=vd,
        field=field, sector_traces=sector_traces, observables=obs_tables,
        states=ys if store else None, diagnostics={},
        dense_shape=ev.dense_shape, _trace_row=ev.trace_row, _adjoint=ev.adjoint,
    )

    probs = result.count_probabilities()
    trace_defect = float(np.abs(probs.sum(axis=0) - 1.0).max())
    result.diagnostics.update(trace_defect=trace_defect, nfev=nfev,
                              method=opts.method, size=total)
    if trace_defect > opts.trace_tol:
        raise NumericsError(
            f"physical trace drifted by {trace_defect:.2e} "
            f"(tolerance {opts.trace_tol:.1e}); tighten rtol/atol or use "
            f"the trapezoid method with a smaller dt")
    if store and ev.adjoint is not None:
        result.diagnostics["hermiticity_defect"] = _hermiticity_defect(result, ev)
    return result


def _hermiticity_defect(result, ev):
    """max |member(n, m) - member(m, n)^dag| at the final stored time."""
    worst = 0.0
    last = len(result.t) - 1
    for n in range(result.n_max + 1):
        for m in range(result.n_max + 1):
            a = result._member_vec(last, n, m)
            b = ev.adjoint(result._member_vec(last, m, n))
            worst = max(worst, float(np.abs(a - b).max()))
    return worst


def _trapezoid(a0, am, ap, env, y0, t0, t1, t_eval, dt):
    """Fixed-step trapezoid rule with the drive frozen at midpoints.

    Solves (I - dt/2 A(tm)) y' = (I + dt/2 A(tm)) y each step; stable for
    stiff generators at the cost of one sparse factorization per step
    (one total when there is no drive).
    """
    n_steps = max(int(np.ceil((t1 - t0) / dt)), 1)
    h = (t1 - t0) / n_steps
    total = y0.size
    eye = sp.identity(total, dtype=complex, format="csc")

    lu = None
    if am is None:
        lu = spla.splu((eye - 0.5 * h * a0).tocsc())
        rhs_mat = (eye + 0.5 * h * a0).tocsr()

    out = np.empty((len(t_eval), total), dtype=complex)
    grid = t0 + h * np.arange(n_steps + 1)
    # linear interpolation of the stepped solution onto the requested times
    idx = np.clip(np.searchsorted(grid, t_eval, side="right") - 1, 0, n_steps - 1)
    w = (t_eval - grid[idx]) / h

    y = y0.astype(complex)
    nfev = 0
    for step in range(n_steps):
        tm = grid[step] + 0.5 * h
        if am is None:
            ynew = lu.solve(rhs_mat @ y)
        else:
            e = env(tm)
            a_mid = a0 + e * am + np.conj(e) * ap
            lu_step = spla.splu((eye - 0.5 * h * a_mid).tocsc())
            ynew = lu_step.solve(y + 0.5 * h * (a_mid @ y))
            nfev += 1
        sel = np.where(idx == step)[0]
        for j in sel:
            out[j] = (1.0 - w[j]) * y + w[j] * ynew
        y = ynew
    exact_end = np.where(np.isclose(t_eval, grid[-1]))[0]
    for j in exact_end:
        out[j] = y
    return out, nfev


class TruncatedLiouvillian:
    """A Liouvillian restricted to basis states within an excitation cap.

    Valid when no undriven channel raises the total excitation grade and
    the dynamics starting inside the cap stays inside it, which holds
    when the cap is at least the photon number plus the initial matter
    excitation. Restriction then commutes with the dynamics exactly.
    """

    def __init__(self, base, n_max):
        space = getattr(base, "space", None)
        if space is None:
            raise ConfigError(
                "truncation by excitation needs a tensor-encoded generator "
                "with a labeled space")
        grades = space.grades
        kept = np.where(grades <= n_max)[0]
        if kept.size == 0:
            raise ConfigError(f"no basis states with grade <= {n_max}")
        self.base = base
        self.n_max_excitation = int(n_max)
        self.kept = kept
        self.space = space
        self.dim = kept.size

        src = base.base if hasattr(base, "base") else base
        ops = []
        if getattr(src, "hamiltonian", None) is not None:
            ops.append(("hamiltonian", src.hamiltonian, True))
        for c in src.channels:
            ops.append((c.tag, c.op, False))
        for a in src.amps:
            ops.append((a.tag, a.op, True))
        for tag, op, conserve in ops:
            coo = op.matrix.tocoo()
            bad = grades[coo.row] > grades[coo.col] if not conserve else \
                grades[coo.row] != grades[coo.col]
            if np.any(bad & (np.abs(coo.data) > 0)):
                kind = "changes" if conserve else "raises"
                raise ConfigError(
                    f"channel {tag!r} {kind} the excitation grade; "
                    f"truncation by excitation does not apply")

        d = space.dim
        p_basis = sp.csr_matrix(
            (np.ones(kept.size), (np.arange(kept.size), kept)), shape=(kept.size, d))
        self._pl = sp.kron(p_basis, p_basis, format="csr")

    def _project(self, m):
        if m is None:
            return None
        return (self._pl @ m @ self._pl.T).tocsr()

    def expand(self, y):
        """Zero-pad a truncated component vector back to the full d**2 layout."""
        return np.asarray(self._pl.T @ np.asarray(y, dtype=complex))

    def engine_view(self, rho0=None):
        ev = self.base.engine_view(rho0)
        k = self.dim
        y0 = np.asarray(self._pl @ ev.default_state)
        lost = abs(np.linalg.norm(ev.default_state) - np.linalg.norm(y0))
        if lost > 1e-12:
            raise ConfigError(
                "initial state has weight outside the excitation cap")
        perm = (np.arange(k * k) % k) * k + np.arange(k * k) // k

        def adjoint(y):
            return np.conj(y[..., perm])

        return EngineView(
            vec_dim=k * k,
            n_sectors=ev.n_sectors,
            g0=self._project(ev.g0),
            jump=self._project(ev.jump),
            field_ket=self._project(ev.field_ket),
            field_bra=self._project(ev.field_bra),
            trace_row=np.asarray(self._pl @ ev.trace_row),
            default_state=y0,
            adjoint=adjoint,
            dense_shape=(k, k),
        )


def truncate_by_excitation(liou, n_max):
    """Restrict a (counting) Liouvillian to total excitation <= n_max."""
    if n_max < 0:
        raise ConfigError(f"excitation cap must be >= 0, got {n_max}")
    return TruncatedLiouvillian(liou, int(n_max))
