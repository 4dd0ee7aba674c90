"""Driven-hierarchy integration against closed forms and dense references."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from pnrsim.architectures import build_array, build_single_element
from pnrsim.errors import ConfigError, ResourceLimitError
from pnrsim.hierarchy import (IntegratorOptions, integrate_hierarchy,
                              reduced_matter_state, truncate_by_excitation)
from pnrsim.pulses import fock_input, gaussian_envelope, superposition_input
from pnrsim.spaces import projector

from helpers import expm_evolve, random_density


def test_vacuum_input_matches_dense_expm():
    arch = build_single_element(0.8, 1.1, Delta=0.4, k=0.3)
    liou = arch.liouvillian()
    rho0 = np.diag([0.2, 0.5, 0.3]).astype(complex)
    T = 2.5
    ref = expm_evolve(liou, rho0, T)
    opts = IntegratorOptions(method="dop853", rtol=1e-12, atol=1e-14, store_states=True)
    run = integrate_hierarchy(liou, None, (0.0, T), opts, rho0=rho0)
    got = run.state_at(-1).member(0, 0)
    assert np.abs(got - ref).max() < 1e-10


def test_vacuum_fock_input_equals_no_field():
    # N=0 drive carries no photons: identical to running without a field
    arch = build_single_element(0.7, 0.9)
    liou = arch.liouvillian()
    rho0 = random_density(np.random.default_rng(0), 3)
    env = gaussian_envelope(1.0)
    opts = IntegratorOptions(rtol=1e-10, atol=1e-12, store_states=True)
    a = integrate_hierarchy(liou, fock_input(0, env), (-3.0, 3.0), opts, rho0=rho0)
    b = integrate_hierarchy(liou, None, (-3.0, 3.0), opts, rho0=rho0)
    assert np.abs(a.state_at(-1).member(0, 0) - b.state_at(-1).member(0, 0)).max() < 1e-9


def test_single_photon_amplitude_oracle():
    # two-level absorber: excited amplitude obeys psi' = -(g^2/2) psi + g E(t)
    g, sig = 0.9, 1.3
    el = build_single_element(g, 0.0)
    env = gaussian_envelope(sig)
    lo, hi = env.support
    tgrid = np.linspace(lo, hi, 301)

    def rhs(t, y):
        return [-0.5 * g * g * y[0] + g * env(t).real]

    sol = solve_ivp(rhs, (lo, hi), [0.0], t_eval=tgrid, rtol=1e-11, atol=1e-13)
    p_ref = sol.y[0] ** 2
    opts = IntegratorOptions(method="dop853", rtol=1e-11, atol=1e-13)
    run = integrate_hierarchy(el.liouvillian(), fock_input(1, env), (lo, hi), opts,
                              t_eval=tgrid,
                              observables={"pe": projector(el.space, "element", "1")})
    p_sim = np.real(run.observable("pe"))
    assert p_ref.max() > 0.5  # the pulse actually drives the element
    assert np.abs(p_sim - p_ref).max() < 1e-6


def test_member_grid_size_matches_photon_number():
    el = build_single_element(1.0, 1.0)
    env = gaussian_envelope(0.5)
    opts = IntegratorOptions(rtol=1e-6, atol=1e-9, n_points=5, store_states=True)
    run = integrate_hierarchy(el.liouvillian(), fock_input(3, env), None, opts)
    assert run.n_max == 3
    state = run.final_state()
    seen = [(n, m) for n in range(4) for m in range(4)
            if state.member(n, m) is not None]
    assert len(seen) == 16
    with pytest.raises(ConfigError):
        state.member(4, 0)


def test_member_conjugate_symmetry():
    el = build_single_element(0.9, 0.8)
    env = gaussian_envelope(1.0)
    field = superposition_input([1.0, 0.8, 0.4j], env)
    opts = IntegratorOptions(rtol=1e-9, atol=1e-11, n_points=9, store_states=True)
    run = integrate_hierarchy(el.liouvillian(), field, None, opts)
    for idx in (2, -1):
        st = run.state_at(idx)
        for n in range(3):
            for m in range(3):
                a = st.member(n, m)
                b = st.member(m, n)
                assert np.abs(a - b.conj().T).max() < 1e-9


def test_physical_state_positive_and_normalized():
    el = build_single_element(0.9, 0.8)
    env = gaussian_envelope(1.0)
    field = superposition_input([0.6, 0.8], env)
    opts = IntegratorOptions(rtol=1e-9, atol=1e-11, n_points=11, store_states=True)
    run = integrate_hierarchy(el.liouvillian(), field, None, opts)
    rho = reduced_matter_state(run.final_state(), field)
    assert abs(np.trace(rho) - 1.0) < 1e-8
    assert np.abs(rho - rho.conj().T).max() < 1e-8
    assert np.linalg.eigvalsh(rho).min() > -1e-8


def test_reduced_state_rejects_larger_field():
    el = build_single_element(0.9, 0.8)
    env = gaussian_envelope(1.0)
    small = fock_input(1, env)
    opts = IntegratorOptions(rtol=1e-8, n_points=5, store_states=True)
    run = integrate_hierarchy(el.liouvillian(), small, None, opts)
    with pytest.raises(ConfigError):
        reduced_matter_state(run.final_state(), fock_input(2, env))


def test_truncation_matches_full_space():
    arch = build_array(2, 1.0, 1.0)
    counting = arch.counting(1)
    trunc = truncate_by_excitation(counting, 1)
    assert trunc.dim < counting.space.dim
    env = gaussian_envelope(1.5)
    field = fock_input(1, env)
    opts = IntegratorOptions(rtol=1e-11, atol=1e-13, n_points=31)
    full = integrate_hierarchy(counting, field, None, opts)
    small = integrate_hierarchy(trunc, field, None, opts)
    assert np.abs(full.count_probabilities() - small.count_probabilities()).max() < 1e-10


def test_truncation_rejects_grade_raising_channel():
    # amplification out of the counted shelf would leave the kept grades
    arch = build_single_element(1.0, 1.0)
    liou = arch.liouvillian()
    absorb = liou.channel("ABSORB")
    raising = type(absorb)("UP", absorb.op.dag())  # |1><0| raises the grade
    with pytest.raises(ConfigError):
        truncate_by_excitation(
            type(liou)(liou.space, liou.hamiltonian,
                       list(liou.channels) + [raising], field_tag=liou.field_tag), 0)


def test_trapezoid_matches_adaptive():
    arch = build_single_element(1.0, 1.0)
    counting = arch.counting(1)
    env = gaussian_envelope(2.0)
    field = fock_input(1, env)
    lo, hi = env.support
    span = (lo, hi + 4.0)
    ref = integrate_hierarchy(counting, field, span, IntegratorOptions(
        rtol=1e-10, atol=1e-12, n_points=41))
    trap = integrate_hierarchy(counting, field, span, IntegratorOptions(
        method="trapezoid", dt=2e-3, n_points=41))
    assert np.abs(ref.count_probabilities() - trap.count_probabilities()).max() < 1e-7


def test_count_probabilities_sum_to_one():
    arch = build_single_element(1.0, 1.0, Delta=0.2)
    counting = arch.counting(2)
    env = gaussian_envelope(1.0)
    run = integrate_hierarchy(counting, fock_input(2, env), None,
                              IntegratorOptions(rtol=1e-9, atol=1e-11, n_points=21))
    totals = run.count_probabilities().sum(axis=0)
    assert np.abs(totals - 1.0).max() < 1e-8
    assert run.count_probabilities().min() > -1e-9


def test_observable_rows_and_operators_agree():
    el = build_single_element(0.8, 1.0)
    env = gaussian_envelope(1.0)
    p1 = projector(el.space, "element", "1")
    ev = el.liouvillian().engine_view()
    raw = np.zeros(ev.vec_dim, dtype=complex)
    raw[:9] = p1.matrix.toarray().conj().T.reshape(-1)  # tr(P rho) row over vec(rho)
    opts = IntegratorOptions(rtol=1e-9, n_points=11)
    run = integrate_hierarchy(el.liouvillian(), fock_input(1, env), None, opts,
                              observables={"op": p1, "row": raw[:9]})
    assert np.allclose(run.observable("op"), run.observable("row"))
    with pytest.raises(ConfigError):
        run.observable("missing")


def test_t_eval_must_lie_inside_span():
    el = build_single_element(1.0, 1.0)
    env = gaussian_envelope(1.0)
    with pytest.raises(ConfigError):
        integrate_hierarchy(el.liouvillian(), fock_input(1, env), (-2.0, 2.0),
                            IntegratorOptions(rtol=1e-6), t_eval=[0.0, 5.0])


def test_store_guard_trips_on_tiny_budget():
    el = build_single_element(1.0, 1.0)
    env = gaussian_envelope(1.0)
    opts = IntegratorOptions(rtol=1e-6, n_points=5001, store_states=True,
                             max_store_bytes=1024)
    with pytest.raises(ResourceLimitError):
        integrate_hierarchy(el.liouvillian(), fock_input(3, env), None, opts)


def test_state_access_requires_storage():
    el = build_single_element(1.0, 1.0)
    env = gaussian_envelope(1.0)
    opts = IntegratorOptions(rtol=1e-6, n_points=11, store_states=False)
    run = integrate_hierarchy(el.liouvillian(), fock_input(1, env), None, opts)
    with pytest.raises(ConfigError):
        run.state_at(-1)
