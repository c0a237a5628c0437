"""Unit tests for errorbudget.
"""
import json
import math
import unittest

import scipy.constants

import qd_hyperfine.errorbudget as eb
from . import utils as test_utils

MU_B = eb.BOHR_MAGNETON_EV_PER_T


class SwapLeakageTests(unittest.TestCase):
    def test_swap_error(self):
        self.assertTrue(math.isclose(eb.swap_error(1e-6, 1e-4), 1e-4))
        self.assertEqual(eb.swap_error(0.0, 1e-4), 0.0)
        self.assertEqual(eb.swap_error(3e-4, 3e-4), 1.0)
        for bad in (0.0, -1e-4):
            with self.assertRaises(eb.BudgetException):
                eb.swap_error(1e-6, bad)

    def test_leakage(self):
        self.assertTrue(math.isclose(eb.leakage(1e-3, 0.1), 1e-4))
        self.assertEqual(eb.leakage(0.0, 0.1), 0.0)
        self.assertEqual(eb.leakage(0.1, 0.1), 1.0)
        with self.assertRaises(eb.BudgetException):
            eb.leakage(1e-3, 0.0)

    def test_scale_invariance(self):
        for c in (1e-3, 7.0, 1e5):
            self.assertTrue(math.isclose(eb.swap_error(2e-6 * c, 3e-4 * c),
                                         eb.swap_error(2e-6, 3e-4)))
            self.assertTrue(math.isclose(eb.leakage(3e-4 * c, 0.05 * c),
                                         eb.leakage(3e-4, 0.05)))


class WindowTests(unittest.TestCase):
    def test_reference_window(self):
        j_min, j_max = eb.j_window(1e-6, 0.1, 1e-4)
        self.assertTrue(math.isclose(j_min, 1e-4))
        self.assertTrue(math.isclose(j_max, 1e-3))

    def test_collapsed_and_empty(self):
        self.assertEqual(eb.j_window(0.25, 1.0, 0.25), (0.5, 0.5))
        self.assertIsNone(eb.j_window(0.3, 1.0, 0.25))
        with self.assertRaises(eb.BudgetException):
            eb.j_window(1e-6, 0.1, 0.0)

    def test_window_consistency(self):
        eps = 1e-4
        dez, dee = 2e-6, 0.08
        j_min, j_max = eb.j_window(dez, dee, eps)
        for j in (j_min * 1.001, math.sqrt(j_min * j_max), j_max * 0.999):
            self.assertLessEqual(eb.swap_error(dez, j), eps)
            self.assertLessEqual(eb.leakage(j, dee), eps)
        self.assertGreater(eb.swap_error(dez, j_min * 0.99), eps)
        self.assertGreater(eb.leakage(j_max * 1.01, dee), eps)


class PrecessionTests(unittest.TestCase):
    def test_parallel_only(self):
        self.assertTrue(math.isclose(eb.precession(1.0, 0.02, 0.0),
                                     2 * MU_B * 1.02))

    def test_reference_value(self):
        omega = eb.precession(1.0, 0.01, 0.01, g_e=2.0)
        self.assertTrue(math.isclose(
            omega, 2 * MU_B * math.sqrt(1.01 ** 2 + 0.01 ** 2)))
        self.assertAlmostEqual(omega, 1.169e-4, delta=1e-7)

    def test_zero(self):
        self.assertEqual(eb.precession(0.0, 0.0, 0.0), 0.0)


class DetuningTests(unittest.TestCase):
    def test_examples(self):
        omega = eb.precession(1.0, 0.0, 0.0)
        self.assertEqual(eb.detuning_error(omega, omega, 1e-3), 0.0)
        self.assertTrue(math.isclose(
            eb.detuning_error(omega + 2 * MU_B * 1e-5, omega, 1e-3), 1e-4))
        self.assertTrue(math.isclose(
            eb.detuning_error(omega + 2 * MU_B * 1e-3, omega, 1e-3), 1.0))

    def test_symmetric(self):
        a, b = 1.2e-4, 1.17e-4
        self.assertEqual(eb.detuning_error(a, b, 2e-3),
                         eb.detuning_error(b, a, 2e-3))

    def test_bad_amplitude(self):
        with self.assertRaises(eb.BudgetException):
            eb.detuning_error(1e-4, 1e-4, 0.0)


class DriftTests(unittest.TestCase):
    def test_reference_limits(self):
        par, perp = eb.drift_tolerances(1.0, 1e-3, 0.01, 1e-4)
        self.assertTrue(math.isclose(par, 1e-5))
        self.assertTrue(math.isclose(perp, 1e-3))

    def test_unit_threshold(self):
        par, perp = eb.drift_tolerances(1.0, 1e-3, 0.01, 1.0)
        self.assertTrue(math.isclose(par, 1e-3))
        self.assertTrue(math.isclose(perp, 1e-3 * 1.0 / 0.01))

    def test_no_perpendicular_field(self):
        par, perp = eb.drift_tolerances(1.0, 1e-3, 0.0, 1e-4)
        self.assertTrue(math.isclose(par, 1e-5))
        self.assertEqual(perp, math.inf)

    def test_weak_static_field_warns(self):
        with self.assertLogs('qd_hyperfine', level='WARNING'):
            eb.drift_tolerances(0.05, 1e-3, 0.01, 1e-4)

    def test_limits_hit_threshold(self):
        eps, b0, bac, bperp = 1e-4, 1.5, 2e-3, 0.02
        par, perp = eb.drift_tolerances(b0, bac, bperp, eps)
        for drift in ((par, 0.0), (0.0, perp)):
            detuning = eb.linearized_detuning(drift[0], drift[1], b0, bperp)
            self.assertTrue(math.isclose(
                eb.detuning_error(detuning, 0.0, bac), eps, rel_tol=1e-9))


class EvaluateTests(unittest.TestCase):
    def test_passing_budget(self):
        params = eb.OperationParams(exchange=5e-4, orbital_spacing=0.1,
                                    zeeman_difference=1e-6)
        budget = eb.evaluate(params)
        self.assertTrue(math.isclose(budget.swap_error, 4e-6))
        self.assertTrue(math.isclose(budget.leakage, 2.5e-5))
        self.assertEqual(budget.detuning_error, 0.0)
        self.assertFalse(budget.window_empty)
        self.assertTrue(budget.ok)
        self.assertEqual(eb.verdicts(budget), ["admissible J: 0.1 - 1 meV"])
        self.assertTrue(math.isclose(budget.precession, 2 * MU_B))

    def test_drift_fails_detuning(self):
        params = eb.OperationParams(exchange=5e-4, orbital_spacing=0.1,
                                    zeeman_difference=1e-6,
                                    drift_parallel=2e-5)
        budget = eb.evaluate(params)
        self.assertTrue(math.isclose(budget.detuning_error, 4e-4))
        self.assertFalse(budget.passed["detuning"])
        self.assertFalse(budget.ok)
        self.assertIn("detuning error above threshold", eb.verdicts(budget))

    def test_explicit_drive(self):
        omega = eb.precession(1.0, 0.0, 0.0)
        params = eb.OperationParams(exchange=5e-4, orbital_spacing=0.1,
                                    zeeman_difference=1e-6,
                                    esr_energy=omega + 2 * MU_B * 1e-5)
        self.assertTrue(math.isclose(eb.evaluate(params).detuning_error,
                                     1e-4))

    def test_empty_window(self):
        params = eb.OperationParams(exchange=1e-4, orbital_spacing=1e-3,
                                    zeeman_difference=1e-6)
        budget = eb.evaluate(params)
        self.assertTrue(budget.window_empty)
        self.assertFalse(budget.passed["j_window"])
        self.assertEqual(eb.verdicts(budget)[0], "no admissible J")

    def test_rows_and_table(self):
        budget = eb.evaluate(eb.OperationParams(
            exchange=5e-4, orbital_spacing=0.1, zeeman_difference=1e-6,
            field_perpendicular=0.01))
        rows = eb.budget_rows(budget)
        json.dumps(rows)
        self.assertEqual(rows["inputs"]["exchange"], 5e-4)
        self.assertEqual(len(rows["j_window_ev"]), 2)
        self.assertGreater(rows["precession_hz"], 2.7e10)
        self.assertLess(rows["precession_hz"], 2.9e10)
        lines = eb.format_budget(budget).splitlines()
        self.assertEqual(len(lines), 7)
        self.assertTrue(lines[1].endswith('ok'))

    def test_constants_agree_with_database(self):
        const = test_utils.database().constants
        self.assertTrue(math.isclose(eb.BOHR_MAGNETON_EV_PER_T,
                                     const.bohr_magneton_ev_per_tesla,
                                     rel_tol=1e-8))
        self.assertTrue(math.isclose(eb.REDUCED_PLANCK_EV_S,
                                     const.reduced_planck_ev_s,
                                     rel_tol=1e-8))
        budget = eb.evaluate(eb.OperationParams(
            exchange=5e-4, orbital_spacing=0.1, zeeman_difference=1e-6))
        hz = budget.precession * scipy.constants.e / scipy.constants.h
        self.assertTrue(math.isclose(eb.budget_rows(budget)["precession_hz"],
                                     hz, rel_tol=1e-12))

    def test_invalid_params(self):
        with self.assertRaises(eb.BudgetException):
            eb.OperationParams(exchange=1e-4, orbital_spacing=0.1,
                               zeeman_difference=1e-6, threshold=0.0)
        with self.assertRaises(eb.BudgetException):
            eb.OperationParams(exchange=0.0, orbital_spacing=0.1,
                               zeeman_difference=1e-6)
        with self.assertRaises(eb.BudgetException):
            eb.OperationParams(exchange=1e-4, orbital_spacing=0.1,
                               zeeman_difference=-1e-6)
        with self.assertRaises(eb.BudgetException):
            eb.OperationParams(exchange=1e-4, orbital_spacing=0.1,
                               zeeman_difference=1e-6, esr_amplitude=0.0)


if __name__ == '__main__':
    unittest.main()
