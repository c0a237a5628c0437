"""Qubit-operation error estimates driven by the nuclear-field spread.

Energies in eV, fields in Tesla. Frequencies are carried as energies
(hbar*omega); proportionality constants of the order-of-magnitude
estimates are 1.
"""
import math

import attr
from scipy.constants import physical_constants

from .utils import QdHyperfineException
from .utils import logger as log

DEFAULT_THRESHOLD = 1e-4
DEFAULT_G_E = 2.0
BOHR_MAGNETON_EV_PER_T = physical_constants['Bohr magneton in eV/T'][0]
REDUCED_PLANCK_EV_S = physical_constants['reduced Planck constant in eV s'][0]
# B0/B_N_perp below this makes the linearized detuning unreliable
FIELD_RATIO_WARNING = 10.0


class BudgetException(QdHyperfineException):
    pass


def _positive(name, value):
    if not value > 0:
        raise BudgetException("{} must be > 0, got {}".format(name, value))


@attr.s(frozen=True)
class OperationParams:
    exchange = attr.ib()
    orbital_spacing = attr.ib()
    zeeman_difference = attr.ib()
    static_field = attr.ib(default=1.0)
    esr_amplitude = attr.ib(default=1e-3)
    field_parallel = attr.ib(default=0.0)
    field_perpendicular = attr.ib(default=0.0)
    # None tunes the drive onto the electron precession
    esr_energy = attr.ib(default=None)
    drift_parallel = attr.ib(default=0.0)
    drift_perpendicular = attr.ib(default=0.0)
    threshold = attr.ib(default=DEFAULT_THRESHOLD)
    g_e = attr.ib(default=DEFAULT_G_E)
    bohr_magneton = attr.ib(default=BOHR_MAGNETON_EV_PER_T)

    def __attrs_post_init__(self):
        if not 0 < self.threshold < 1:
            raise BudgetException(
                "Error threshold must lie in (0, 1), got {}"
                .format(self.threshold))
        _positive("exchange J", self.exchange)
        _positive("orbital spacing", self.orbital_spacing)
        _positive("static field B0", self.static_field)
        _positive("ESR amplitude B_ac", self.esr_amplitude)
        if self.zeeman_difference < 0:
            raise BudgetException("Zeeman difference must be >= 0")


@attr.s
class ErrorBudget:
    params = attr.ib()
    swap_error = attr.ib()
    leakage = attr.ib()
    detuning_error = attr.ib()
    # (J_min, J_max) in eV, None when empty
    j_window = attr.ib()
    drift_limits = attr.ib()
    precession = attr.ib()
    passed = attr.ib(factory=dict)

    @property
    def window_empty(self):
        return self.j_window is None

    @property
    def ok(self):
        return all(self.passed.values())


def swap_error(zeeman_difference, exchange):
    """(Delta E_Z / J)^2."""
    _positive("exchange J", exchange)
    return (zeeman_difference / exchange) ** 2


def leakage(exchange, orbital_spacing):
    """(J / Delta E_e)^2."""
    _positive("orbital spacing", orbital_spacing)
    return (exchange / orbital_spacing) ** 2


def j_window(zeeman_difference, orbital_spacing, threshold=DEFAULT_THRESHOLD):
    """Exchange energies with both swap error and leakage <= threshold.

    Returns (J_min, J_max) or None when J_min > J_max.
    """
    _positive("threshold", threshold)
    root = math.sqrt(threshold)
    j_min = zeeman_difference / root
    j_max = orbital_spacing * root
    if j_min > j_max:
        return None
    return j_min, j_max


def precession(static_field, field_parallel, field_perpendicular,
               g_e=DEFAULT_G_E, bohr_magneton=BOHR_MAGNETON_EV_PER_T):
    """Electron precession energy g_e mu_B |B0 + B_N|, eV."""
    return g_e * bohr_magneton * math.hypot(static_field + field_parallel,
                                            field_perpendicular)


def detuning_error(esr_energy, precession_energy, esr_amplitude,
                   g_e=DEFAULT_G_E, bohr_magneton=BOHR_MAGNETON_EV_PER_T):
    """(omega_ac - omega_e)^2 / (g_e mu_B B_ac)^2."""
    _positive("ESR amplitude B_ac", esr_amplitude)
    rabi = g_e * bohr_magneton * esr_amplitude
    return ((esr_energy - precession_energy) / rabi) ** 2


def linearized_detuning(drift_parallel, drift_perpendicular, static_field,
                        field_perpendicular, g_e=DEFAULT_G_E,
                        bohr_magneton=BOHR_MAGNETON_EV_PER_T):
    """omega_ac - omega_e to first order in the drifts, for B0 >> B_N."""
    _positive("static field B0", static_field)
    return g_e * bohr_magneton * (
        drift_parallel
        + field_perpendicular / static_field * drift_perpendicular)


def drift_tolerances(static_field, esr_amplitude, field_perpendicular,
                     threshold=DEFAULT_THRESHOLD):
    """Largest parallel and perpendicular drifts keeping the detuning
    error at the threshold, each with the other drift at zero.
    """
    _positive("static field B0", static_field)
    _positive("ESR amplitude B_ac", esr_amplitude)
    root = math.sqrt(threshold)
    parallel = root * esr_amplitude
    if field_perpendicular == 0:
        return parallel, math.inf
    ratio = static_field / abs(field_perpendicular)
    if ratio < FIELD_RATIO_WARNING:
        log.warning("B0/B_N_perp = %.3g < %g; linearized drift limits are "
                    "unreliable", ratio, FIELD_RATIO_WARNING)
    return parallel, parallel * ratio


def evaluate(params: OperationParams) -> ErrorBudget:
    g, mu = params.g_e, params.bohr_magneton
    omega_e = precession(params.static_field, params.field_parallel,
                         params.field_perpendicular, g, mu)
    if params.esr_energy is None:
        # drive tuned to the undrifted field, detuned by the drifts
        esr = omega_e
        omega_drift = omega_e + linearized_detuning(
            params.drift_parallel, params.drift_perpendicular,
            params.static_field, params.field_perpendicular, g, mu)
    else:
        esr = params.esr_energy
        omega_drift = omega_e
    budget = ErrorBudget(
        params=params,
        swap_error=swap_error(params.zeeman_difference, params.exchange),
        leakage=leakage(params.exchange, params.orbital_spacing),
        detuning_error=detuning_error(esr, omega_drift, params.esr_amplitude,
                                      g, mu),
        j_window=j_window(params.zeeman_difference, params.orbital_spacing,
                          params.threshold),
        drift_limits=drift_tolerances(params.static_field,
                                      params.esr_amplitude,
                                      params.field_perpendicular,
                                      params.threshold),
        precession=omega_e)
    eps = params.threshold
    budget.passed = {
        "swap": budget.swap_error <= eps,
        "leakage": budget.leakage <= eps,
        "detuning": budget.detuning_error <= eps,
        "j_window": budget.j_window is not None,
    }
    log.debug("Budget: swap %.3g leakage %.3g detuning %.3g window %s",
              budget.swap_error, budget.leakage, budget.detuning_error,
              budget.j_window)
    return budget


def verdicts(budget: ErrorBudget):
    out = []
    if budget.window_empty:
        out.append("no admissible J")
    else:
        j_min, j_max = budget.j_window
        out.append("admissible J: {:.3g} - {:.3g} meV".format(j_min * 1e3,
                                                             j_max * 1e3))
    for item in ("swap", "leakage", "detuning"):
        if not budget.passed[item]:
            out.append("{} error above threshold".format(item))
    return out


def budget_rows(budget: ErrorBudget):
    p = budget.params
    par, perp = budget.drift_limits
    return {
        "inputs": attr.asdict(p),
        "swap_error": budget.swap_error,
        "leakage": budget.leakage,
        "detuning_error": budget.detuning_error,
        "precession_ev": budget.precession,
        "precession_hz": budget.precession
        / (2 * math.pi * REDUCED_PLANCK_EV_S),
        "j_window_ev": None if budget.window_empty else list(budget.j_window),
        "window_empty": budget.window_empty,
        "drift_limit_parallel_t": par,
        "drift_limit_perpendicular_t": perp,
        "passed": dict(budget.passed),
        "verdicts": verdicts(budget),
    }


def format_budget(budget: ErrorBudget):
    rows = budget_rows(budget)
    mark = {True: 'ok', False: 'FAIL'}
    lines = [
        "{:<22} {:>12}  {}".format('Item', 'value', 'verdict'),
        "{:<22} {:>12.3g}  {}".format('swap (dE_Z/J)^2', rows["swap_error"],
                                     mark[budget.passed["swap"]]),
        "{:<22} {:>12.3g}  {}".format('leakage (J/dE_e)^2', rows["leakage"],
                                     mark[budget.passed["leakage"]]),
        "{:<22} {:>12.3g}  {}".format('ESR detuning', rows["detuning_error"],
                                     mark[budget.passed["detuning"]]),
        "{:<22} {:>12.3g}  T".format('max drift parallel',
                                     rows["drift_limit_parallel_t"]),
        "{:<22} {:>12.3g}  T".format('max drift perp.',
                                     rows["drift_limit_perpendicular_t"]),
    ]
    lines.extend(verdicts(budget))
    return '\n'.join(lines)
