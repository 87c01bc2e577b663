"""Physical system specification and interaction-picture Hamiltonian.

Internal units: angular frequencies and couplings in rad/ns, decay and
dephasing rates in 1/ns, times in ns.  A frequency quoted as "5.5 GHz"
in the usual omega/2pi convention is 2*pi*5.5 rad/ns here.

The interaction picture is taken with respect to the (piecewise
constant) free Hamiltonian, so every coupling term carries a phase
factor exp(i * phi(t)) with phi the time integral of the corresponding
detuning.  Because the qutrit is retuned between pulse steps, two
conventions for these phases are supported; see
:class:`PhaseAccumulators` and ``evolve.IntegratorConfig.phase_frame``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .spaces import (
    E,
    F,
    G,
    Operator,
    SpaceLayout,
    destroy,
    embed_matrix,
    level_projector,
    transition_op,
    system_layout,
)

__all__ = [
    "Transition",
    "QutritSpec",
    "ResonatorSpec",
    "SystemSpec",
    "PulseStep",
    "Schedule",
    "PhaseAccumulators",
    "ConfigError",
    "coupling_terms",
    "interaction_hamiltonian",
    "collapse_operators",
    "advance_phases",
    "excitation_number_op",
]

SQRT2 = float(np.sqrt(2.0))

RESONANCE_TOL = 1e-12
DURATION_TOL = 1e-12


class ConfigError(ValueError):
    """Inconsistent or unphysical system/schedule configuration."""


class Transition(enum.Enum):
    """Which qutrit transition a resonator is resonantly addressing."""

    GE = "ge"
    EF = "ef"


@dataclass(frozen=True)
class QutritSpec:
    """Transmon qutrit decoherence rates (1/ns) and anharmonicity (rad/ns).

    The anharmonicity is the difference between the g-e and e-f transition
    frequencies and is assumed constant while the qutrit is retuned.
    """

    gamma_ge: float = 0.0
    gamma_ef: float = 0.0
    gamma_phi_e: float = 0.0
    gamma_phi_f: float = 0.0
    anharmonicity: float = 2 * np.pi * 0.8

    def __post_init__(self):
        rates = (self.gamma_ge, self.gamma_ef, self.gamma_phi_e, self.gamma_phi_f)
        if any(r < 0 for r in rates):
            raise ConfigError(f"negative qutrit rate in {rates}")
        if self.anharmonicity <= 0:
            raise ConfigError("transmon anharmonicity must be positive")


@dataclass(frozen=True)
class ResonatorSpec:
    """One resonator mode: frequency (rad/ns), decay rate (1/ns), Fock levels."""

    omega: float
    kappa: float = 0.0
    fock_cutoff: int = 3

    def __post_init__(self):
        if self.omega <= 0:
            raise ConfigError("resonator frequency must be positive")
        if self.kappa < 0:
            raise ConfigError("resonator decay rate must be nonnegative")
        if self.fock_cutoff < 2:
            raise ConfigError("fock_cutoff must be at least 2")


@dataclass(frozen=True)
class SystemSpec:
    qutrit: QutritSpec
    resonators: tuple[ResonatorSpec, ...]

    def __post_init__(self):
        if not self.resonators:
            raise ConfigError("need at least one resonator")
        cutoffs = {r.fock_cutoff for r in self.resonators}
        if len(cutoffs) != 1:
            raise ConfigError("all resonators must share one fock_cutoff")

    @property
    def n_resonators(self) -> int:
        return len(self.resonators)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([r.omega for r in self.resonators])

    def layout(self) -> SpaceLayout:
        return system_layout(self.n_resonators, self.resonators[0].fock_cutoff)


@dataclass(frozen=True)
class PulseStep:
    """One square pulse: fixed qutrit frequency and couplings.

    ``addressed`` names the (resonator index, transition) pair that is held
    exactly on resonance; ``duration`` must equal pulse_area / g_addressed.
    """

    omega_ge: float
    g_ge: tuple[float, ...]
    g_ef: tuple[float, ...]
    addressed: tuple[int, Transition]
    pulse_area: float
    duration: float

    def addressed_coupling(self) -> float:
        r, tr = self.addressed
        return self.g_ef[r] if tr is Transition.EF else self.g_ge[r]

    def omega_ef(self, anharmonicity: float) -> float:
        return self.omega_ge - anharmonicity

    def detunings(self, system: SystemSpec) -> np.ndarray:
        """(n_res, 2) array of omega_transition - omega_resonator."""
        w_ef = self.omega_ef(system.qutrit.anharmonicity)
        out = np.empty((system.n_resonators, 2))
        out[:, 0] = self.omega_ge - system.omegas
        out[:, 1] = w_ef - system.omegas
        return out

    def validate(self, system: SystemSpec) -> None:
        n = system.n_resonators
        if len(self.g_ge) != n or len(self.g_ef) != n:
            raise ConfigError("coupling lists must have one entry per resonator")
        r, tr = self.addressed
        if not 0 <= r < n:
            raise ConfigError(f"addressed resonator {r} out of range")
        w_pair = self.omega_ge if tr is Transition.GE else self.omega_ef(system.qutrit.anharmonicity)
        if abs(w_pair - system.resonators[r].omega) > RESONANCE_TOL:
            raise ConfigError(
                f"addressed pair off resonance: transition at {w_pair} rad/ns, "
                f"resonator {r} at {system.resonators[r].omega} rad/ns"
            )
        g = self.addressed_coupling()
        if g <= 0:
            raise ConfigError("addressed coupling must be positive")
        if abs(self.duration - self.pulse_area / g) > DURATION_TOL * max(1.0, self.duration):
            raise ConfigError("duration inconsistent with pulse_area / g_addressed")


@dataclass(frozen=True)
class Schedule:
    steps: tuple[PulseStep, ...]

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.steps))

    def validate(self, system: SystemSpec) -> None:
        for s in self.steps:
            s.validate(system)

    def max_detuning(self, system: SystemSpec) -> float:
        if not self.steps:
            return 0.0
        return max(float(np.max(np.abs(s.detunings(system)))) for s in self.steps)


@dataclass
class PhaseAccumulators:
    """Running interaction-picture phases phi = integral of detuning dt.

    One phase per (resonator, transition) pair, kept in an (n_res, 2) array
    with column 0 = g-e and column 1 = e-f.  Within a step the phase grows
    linearly at the step's constant detuning; across steps it is either
    carried over (continuous frame) or reset to zero (per-step frame,
    matching a qutrit frame redefinition at each retune).  Mutable,
    per-trajectory state: never share one instance between propagations.
    """

    phases: np.ndarray

    @classmethod
    def zeros(cls, n_resonators: int) -> "PhaseAccumulators":
        return cls(np.zeros((n_resonators, 2)))

    def copy(self) -> "PhaseAccumulators":
        return PhaseAccumulators(self.phases.copy())

    def reset(self) -> None:
        self.phases[:] = 0.0


def advance_phases(phases: PhaseAccumulators, step: PulseStep, dt: float,
                   system: SystemSpec) -> PhaseAccumulators:
    """Return phases advanced by dt of the step's constant detunings."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    return PhaseAccumulators(phases.phases + step.detunings(system) * dt)


# ---------------------------------------------------------------------------
# operator construction

def _qutrit_raising(transition: Transition) -> np.ndarray:
    if transition is Transition.GE:
        return transition_op(G, E)
    return transition_op(E, F)


def coupling_terms(system: SystemSpec, layout: SpaceLayout, step: PulseStep):
    """All coupling terms of the step as (matrix, coupling, detuning) triples.

    Each matrix is g-free: a_r sigma^+ embedded in the full space.  The
    Hamiltonian is sum_k g_k * exp(i phi_k(t)) * term_k + h.c.; terms with
    zero coupling are dropped.
    """
    det = step.detunings(system)
    out = []
    for r in range(system.n_resonators):
        a_r = embed_matrix(destroy(layout.factor_dims[r + 1]), r + 1, layout)
        for col, (tr, g) in enumerate(
            ((Transition.GE, step.g_ge[r]), (Transition.EF, step.g_ef[r]))
        ):
            if g == 0.0:
                continue
            sig = embed_matrix(_qutrit_raising(tr), 0, layout)
            out.append((a_r @ sig, float(g), float(det[r, col])))
    return out


def interaction_hamiltonian(system: SystemSpec, layout: SpaceLayout, step: PulseStep,
                            phases: PhaseAccumulators, t_within_step: float) -> Operator:
    """H(t) a time ``t_within_step`` into the step; Hermitian by construction.

    ``phases`` holds the accumulated phases at the start of the step.
    """
    det = step.detunings(system)
    phi = phases.phases + det * t_within_step
    h = np.zeros((layout.dim, layout.dim), dtype=complex)
    for r in range(system.n_resonators):
        a_r = embed_matrix(destroy(layout.factor_dims[r + 1]), r + 1, layout)
        for col, (tr, g) in enumerate(
            ((Transition.GE, step.g_ge[r]), (Transition.EF, step.g_ef[r]))
        ):
            if g == 0.0:
                continue
            sig = embed_matrix(_qutrit_raising(tr), 0, layout)
            h += g * np.exp(1j * phi[r, col]) * (a_r @ sig)
    h_full = h + h.conj().T
    return Operator(layout, h_full)


def collapse_operators(system: SystemSpec, layout: SpaceLayout) -> list[Operator]:
    """Lindblad collapse operators, zero-rate channels omitted.

    Photon decay sqrt(kappa_r) a_r per resonator, qutrit relaxation
    sqrt(gamma_ge) |g><e| and sqrt(gamma_ef) |e><f|, and pure dephasing
    via the level projectors sqrt(gamma_phi) |e><e| and |f><f| (projector
    dissipators reproduce the usual dephasing terms exactly).
    """
    ops: list[Operator] = []
    for r, res in enumerate(system.resonators):
        if res.kappa > 0:
            a_r = embed_matrix(destroy(layout.factor_dims[r + 1]), r + 1, layout)
            ops.append(Operator(layout, np.sqrt(res.kappa) * a_r))
    q = system.qutrit
    if q.gamma_ge > 0:
        ops.append(Operator(layout, np.sqrt(q.gamma_ge) * embed_matrix(transition_op(E, G), 0, layout)))
    if q.gamma_ef > 0:
        ops.append(Operator(layout, np.sqrt(q.gamma_ef) * embed_matrix(transition_op(F, E), 0, layout)))
    if q.gamma_phi_e > 0:
        ops.append(Operator(layout, np.sqrt(q.gamma_phi_e) * embed_matrix(level_projector(E), 0, layout)))
    if q.gamma_phi_f > 0:
        ops.append(Operator(layout, np.sqrt(q.gamma_phi_f) * embed_matrix(level_projector(F), 0, layout)))
    return ops


def excitation_number_op(layout: SpaceLayout) -> Operator:
    """Total excitation number: sum_r n_r + (|e><e| + 2 |f><f|).

    Commutes with every coupling term, so it is conserved along any
    dissipation-free trajectory.
    """
    n_tot = np.zeros((layout.dim, layout.dim), dtype=complex)
    for r in range(1, layout.n_factors):
        d = layout.factor_dims[r]
        n_tot += embed_matrix(np.diag(np.arange(d, dtype=float)).astype(complex), r, layout)
    n_tot += embed_matrix(level_projector(E) + 2 * level_projector(F), 0, layout)
    return Operator(layout, n_tot)
