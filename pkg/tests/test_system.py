import numpy as np
import pytest

from resgates.spaces import E, F, G, basis_vector, embed_matrix, transition_op
from resgates.system import (
    ConfigError,
    PhaseAccumulators,
    PulseStep,
    QutritSpec,
    ResonatorSpec,
    Schedule,
    SystemSpec,
    Transition,
    advance_phases,
    collapse_operators,
    coupling_terms,
    excitation_number_op,
    interaction_hamiltonian,
)

TWO_PI = 2 * np.pi
RNG = np.random.default_rng(7)


def two_res_system(kappa=0.0, **qutrit_rates):
    q = QutritSpec(anharmonicity=TWO_PI * 0.8, **qutrit_rates)
    return SystemSpec(q, (ResonatorSpec(TWO_PI * 5.5, kappa), ResonatorSpec(TWO_PI * 7.0, kappa)))


def ge_step(system, g_main=TWO_PI * 0.045, g_other=0.0, area=1.5 * np.pi):
    g = g_main
    return PulseStep(
        omega_ge=system.resonators[0].omega,
        g_ge=(g, g_other),
        g_ef=(np.sqrt(2) * g, np.sqrt(2) * g_other),
        addressed=(0, Transition.GE),
        pulse_area=area,
        duration=area / g,
    )


def test_spec_validation():
    with pytest.raises(ConfigError):
        QutritSpec(gamma_ge=-1.0)
    with pytest.raises(ConfigError):
        QutritSpec(anharmonicity=0.0)
    with pytest.raises(ConfigError):
        ResonatorSpec(omega=-1.0)
    with pytest.raises(ConfigError):
        ResonatorSpec(omega=1.0, fock_cutoff=1)


def test_step_resonance_validation():
    system = two_res_system()
    step = ge_step(system)
    step.validate(system)
    # detuned copy must fail
    bad = PulseStep(step.omega_ge + 1e-6, step.g_ge, step.g_ef, step.addressed,
                    step.pulse_area, step.duration)
    with pytest.raises(ConfigError):
        bad.validate(system)
    # wrong duration must fail
    bad2 = PulseStep(step.omega_ge, step.g_ge, step.g_ef, step.addressed,
                     step.pulse_area, step.duration * 1.01)
    with pytest.raises(ConfigError):
        bad2.validate(system)


def test_schedule_total_duration_is_sum():
    system = two_res_system()
    s1, s2 = ge_step(system), ge_step(system, area=np.pi / 2)
    sched = Schedule((s1, s2))
    assert sched.total_duration == pytest.approx(s1.duration + s2.duration, rel=1e-15)


def test_hamiltonian_resonant_addressed_term_is_static_jc():
    # only the addressed coupling on -> H = g (a sigma+ + a+ sigma-), t-independent
    system = two_res_system()
    layout = system.layout()
    g = TWO_PI * 0.045
    step = ge_step(system, g_main=g)
    step = PulseStep(step.omega_ge, (g, 0.0), (0.0, 0.0), step.addressed,
                     step.pulse_area, step.duration)
    phases = PhaseAccumulators.zeros(2)
    h0 = interaction_hamiltonian(system, layout, step, phases, 0.0).entries
    h1 = interaction_hamiltonian(system, layout, step, phases, 3.7).entries
    assert np.allclose(h0, h1)
    from resgates.spaces import destroy

    a = embed_matrix(destroy(3), 1, layout)
    sig = embed_matrix(transition_op(G, E), 0, layout)
    expected = g * (a @ sig + (a @ sig).conj().T)
    assert np.allclose(h0, expected)


def test_hamiltonian_zero_couplings_gives_zero():
    system = two_res_system()
    layout = system.layout()
    step = ge_step(system)
    zero = PulseStep(step.omega_ge, (0.0, 0.0), (0.0, 0.0), step.addressed,
                     step.pulse_area, step.duration)
    h = interaction_hamiltonian(system, layout, zero, PhaseAccumulators.zeros(2), 1.0)
    assert np.count_nonzero(h.entries) == 0


def test_hamiltonian_hermitian_for_random_inputs():
    system = two_res_system()
    layout = system.layout()
    step = ge_step(system, g_other=TWO_PI * 0.0005)
    for _ in range(5):
        phases = PhaseAccumulators(RNG.uniform(-10, 10, size=(2, 2)))
        t = RNG.uniform(0, 20)
        h = interaction_hamiltonian(system, layout, step, phases, t)
        assert h.hermiticity_defect() < 1e-14


def test_hamiltonian_matrix_elements_on_two_excitation_block():
    # hand enumeration: first pulse of the two-resonator phase gate with the
    # residual coupling on resonator b
    system = two_res_system()
    layout = system.layout()
    g_a, g_b = TWO_PI * 0.045, TWO_PI * 0.0005
    step = ge_step(system, g_main=g_a, g_other=g_b)
    phases = PhaseAccumulators.zeros(2)
    t = 0.6
    h = interaction_hamiltonian(system, layout, step, phases, t).entries

    det = step.detunings(system)
    idx = lambda q, na, nb: layout.flat_index((q, na, nb))
    # resonant a,GE: |g,1,nb> -> |e,0,nb> amplitude g_a (phase 0)
    assert h[idx(E, 0, 1), idx(G, 1, 1)] == pytest.approx(g_a)
    # a,EF term: |e,1,0> -> |f,0,0> amplitude g_a*sqrt(2)*exp(i delta_ef t)
    expected_ef = np.sqrt(2) * g_a * np.exp(1j * det[0, 1] * t)
    assert h[idx(F, 0, 0), idx(E, 1, 0)] == pytest.approx(expected_ef)
    # b,GE residual: |g,0,1> -> |e,0,0> amplitude g_b*exp(i delta_b_ge t)
    expected_b = g_b * np.exp(1j * det[1, 0] * t)
    assert h[idx(E, 0, 0), idx(G, 0, 1)] == pytest.approx(expected_b)
    # sqrt(2) Fock enhancement: |g,2,0> -> |e,1,0| amplitude g_a*sqrt(2)
    assert h[idx(E, 1, 0), idx(G, 2, 0)] == pytest.approx(np.sqrt(2) * g_a)
    # no coupling between unrelated states
    assert h[idx(G, 0, 0), idx(G, 1, 1)] == 0


def test_excitation_number_commutes_with_hamiltonian():
    system = two_res_system()
    layout = system.layout()
    n_op = excitation_number_op(layout).entries
    step = ge_step(system, g_other=TWO_PI * 0.0005)
    for _ in range(3):
        phases = PhaseAccumulators(RNG.uniform(-5, 5, size=(2, 2)))
        h = interaction_hamiltonian(system, layout, step, phases, RNG.uniform(0, 10)).entries
        assert np.max(np.abs(h @ n_op - n_op @ h)) < 1e-12


def test_collapse_operators_unitary_limit_is_empty():
    system = two_res_system()
    assert collapse_operators(system, system.layout()) == []


def test_collapse_operators_values_and_order():
    kappa = 1.0 / 50_000.0  # 50 us lifetime
    system = two_res_system(kappa=kappa, gamma_ge=2e-5, gamma_ef=4e-5,
                            gamma_phi_e=2e-5, gamma_phi_f=2e-5)
    layout = system.layout()
    ops = collapse_operators(system, layout)
    assert len(ops) == 6
    from resgates.spaces import destroy

    a = embed_matrix(destroy(3), 1, layout)
    assert np.allclose(ops[0].entries, np.sqrt(kappa) * a)
    sm_ge = embed_matrix(transition_op(E, G), 0, layout)
    assert np.allclose(ops[2].entries, np.sqrt(2e-5) * sm_ge)


def test_collapse_operators_negative_rate_rejected():
    with pytest.raises(ConfigError):
        two_res_system(kappa=-1e-5)


def test_advance_phases_zero_dt_is_identity():
    system = two_res_system()
    step = ge_step(system)
    phases = PhaseAccumulators(RNG.uniform(-1, 1, (2, 2)))
    out = advance_phases(phases, step, 0.0, system)
    assert np.array_equal(out.phases, phases.phases)


def test_advance_phases_resonant_pair_stays_constant():
    system = two_res_system()
    step = ge_step(system)
    phases = PhaseAccumulators.zeros(2)
    out = advance_phases(phases, step, step.duration, system)
    assert out.phases[0, 0] == 0.0  # addressed (a, GE) pair is resonant
    assert out.phases[0, 1] != 0.0


def test_advance_phases_piecewise_integral():
    # two steps with detunings +2pi*1.5 then -2pi*0.8 for 1 ns each on (b, GE)
    system = two_res_system()
    step1 = ge_step(system)  # omega_ge = omega_a = 2pi*5.5, so delta_b_ge = -2pi*1.5
    phases = advance_phases(PhaseAccumulators.zeros(2), step1, 1.0, system)
    assert phases.phases[1, 0] == pytest.approx(-TWO_PI * 1.5)
    # retune so that delta_b_ge = +2pi*0.8: omega_ge = 2pi*7.8 (EF resonant with b)
    step2 = PulseStep(
        omega_ge=TWO_PI * 7.8,
        g_ge=(0.0, TWO_PI * 0.022),
        g_ef=(0.0, TWO_PI * 0.022 * np.sqrt(2)),
        addressed=(1, Transition.EF),
        pulse_area=np.pi,
        duration=np.pi / (TWO_PI * 0.022 * np.sqrt(2)),
    )
    step2.validate(system)
    phases = advance_phases(phases, step2, 1.0, system)
    assert phases.phases[1, 0] == pytest.approx(-TWO_PI * 1.5 + TWO_PI * 0.8)
    assert abs(phases.phases[1, 0]) == pytest.approx(TWO_PI * 0.7)


def test_phase_accumulator_derivative_matches_detuning():
    system = two_res_system()
    step = ge_step(system)
    det = step.detunings(system)
    p1 = advance_phases(PhaseAccumulators.zeros(2), step, 0.25, system)
    p2 = advance_phases(p1, step, 0.25, system)
    assert np.allclose((p2.phases - p1.phases) / 0.25, det)
