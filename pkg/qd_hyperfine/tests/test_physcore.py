"""Unit tests for physcore.
"""
import copy
import json
import math
import pathlib
import tempfile
import unittest

import attr

import qd_hyperfine.physcore as pc
from . import utils as test_utils


BASE_DIR = pathlib.Path(__file__).parent

# (atom, host) -> |phi_s(0)|^2, |phi_s*(0)|^2 in 1e25 cm^-3
PUBLISHED = {
    ('In', 'InAs'): (7.9, 2.2),
    ('As', 'InAs'): (18.4, 1.7),
    ('Ga', 'GaAs'): (5.2, 1.0),
    ('As', 'GaAs'): (20.2, 1.8),
}


def raw_database():
    with open(str(pc.DEFAULT_DATABASE)) as fin:
        return json.load(fin)


class CalibrationTests(unittest.TestCase):
    def test_in_in_inas(self):
        entry = pc.BulkCalibrationInput('In', 'InAs', 'cation', 1.0,
                                        0.974, 0.228, density=9.4e25)
        dens_s, dens_s_star = pc.calibrate_orbital_densities(entry, 0.53)
        self.assertAlmostEqual(dens_s / 1e25, 7.9, delta=0.1)
        self.assertAlmostEqual(dens_s_star / 1e25, 2.2, delta=0.05)

    def test_as_in_gaas(self):
        entry = pc.BulkCalibrationInput('As', 'GaAs', 'anion', 0.6125,
                                        0.869, -0.576, density=9.8e25)
        dens_s, dens_s_star = pc.calibrate_orbital_densities(entry, 0.30)
        self.assertAlmostEqual(dens_s / 1e25, 20.2, delta=0.05)
        self.assertAlmostEqual(dens_s_star / 1e25, 1.8, delta=0.05)

    def test_single_orbital_limit(self):
        entry = pc.BulkCalibrationInput('X', 'XY', 'cation', 1.0, 0.8, 0.0,
                                        density=0.64 * 3e25)
        dens_s, _ = pc.calibrate_orbital_densities(entry, 0.77)
        self.assertTrue(math.isclose(dens_s, 3e25, rel_tol=1e-12))

    def test_recompose(self):
        for phi_s, ratio, alpha, beta in [(3.1e12, 0.53, 0.974, 0.228),
                                          (4.4e12, 0.30, 0.869, -0.576),
                                          (2.0e12, -0.7, 0.6, 0.5)]:
            density = (alpha * phi_s + beta * ratio * phi_s) ** 2
            entry = pc.BulkCalibrationInput('X', 'XY', 'cation', 1.0,
                                            alpha, beta, density=density)
            dens_s, dens_s_star = pc.calibrate_orbital_densities(entry, ratio)
            self.assertTrue(math.isclose(dens_s, phi_s ** 2, rel_tol=1e-12))
            self.assertTrue(math.isclose(dens_s_star, (ratio * phi_s) ** 2,
                                         rel_tol=1e-12))
            recomposed = (alpha * math.sqrt(dens_s)
                          + beta * ratio * math.sqrt(dens_s)) ** 2
            self.assertTrue(math.isclose(recomposed, density, rel_tol=1e-12))

    def test_singular(self):
        entry = pc.BulkCalibrationInput('X', 'XY', 'cation', 1.0, 0.5, -0.5,
                                        density=1e25)
        with self.assertRaises(pc.CalibrationException):
            pc.calibrate_orbital_densities(entry, 1.0)

    def test_missing_density(self):
        entry = pc.BulkCalibrationInput('X', 'XY', 'cation', 1.0, 0.9, 0.1)
        with self.assertRaises(pc.CalibrationException):
            pc.calibrate_orbital_densities(entry, 0.5)

    def test_coefficients_above_one(self):
        with self.assertRaises(pc.CalibrationException):
            pc.BulkCalibrationInput('X', 'XY', 'cation', 1.0, 1.0, 0.5)

    def test_deduce(self):
        reference = {'cation': 9.4e25, 'anion': 1.6e26}
        entries = [
            pc.BulkCalibrationInput('In', 'InAs', 'cation', 1.0, 0.9, 0.1),
            pc.BulkCalibrationInput('As', 'InAs', 'anion', 0.6125, 0.9, 0.1),
        ]
        deduced = pc.deduce_bulk_densities(reference, entries)
        self.assertTrue(math.isclose(deduced[('In', 'InAs')], 9.4e25))
        self.assertTrue(math.isclose(deduced[('As', 'InAs')], 9.8e25))

    def test_deduce_zero_ratio(self):
        entries = [pc.BulkCalibrationInput('In', 'InAs', 'cation', 0.0,
                                           0.9, 0.1)]
        with self.assertRaises(pc.CalibrationException):
            pc.deduce_bulk_densities({'cation': 1.0, 'anion': 1.0}, entries)

    def test_table_reproduces_published_densities(self):
        rows = pc.calibration_table(test_utils.database())
        self.assertEqual(len(rows), 4)
        for row in rows:
            s, s_star = PUBLISHED[(row["atom"], row["host"])]
            # published columns come from unrounded coefficients
            self.assertLess(abs(row["phi_s_density"] / 1e25 / s - 1), 0.015)
            self.assertLess(abs(row["phi_s_star_density"] / 1e25 / s_star
                                - 1), 0.03)
            self.assertTrue(math.isclose(
                row["phi_s_star_density"],
                row["ratio"] ** 2 * row["phi_s_density"], rel_tol=1e-6))


class DatabaseTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, content):
        path = pathlib.Path(self.tmp.name) / 'db.json'
        with open(str(path), 'w') as fout:
            fout.write(content)
        return path

    def test_bundled(self):
        db = pc.load_database()
        spins = {sp.name: sp.spin for sp in db.species}
        self.assertEqual(spins, {'In': 4.5, 'Ga': 1.5, 'As': 1.5})
        self.assertEqual(db.species_for('In').dominant.mass_number, 115)
        self.assertEqual(db.cation_of('InAs'), 'In')
        self.assertEqual(db.anion_of('GaAs'), 'As')
        self.assertEqual(db.binary_of_cation('Ga').name, 'GaAs')
        self.assertEqual(set(db.species_for('As').orbital_densities),
                         {'InAs', 'GaAs'})

    def test_idempotent(self):
        self.assertEqual(pc.load_database(), pc.load_database())

    def test_calibrate_stripped_database(self):
        db = pc.load_database()
        bare = attr.evolve(db, species=[attr.evolve(sp, orbital_densities={})
                                        for sp in db.species])
        self.assertEqual(pc.calibrate_database(bare).species, db.species)

    def test_constants(self):
        const = test_utils.database().constants
        self.assertAlmostEqual(const.bohr_magneton_ev_per_tesla, 5.7884e-5,
                               delta=1e-9)
        self.assertAlmostEqual(const.reduced_planck_ev_s, 6.5821e-16,
                               delta=1e-20)
        ratio = const.nuclear_magneton / const.bohr_magneton
        self.assertAlmostEqual(ratio, 5.446e-4, delta=5e-8)
        self.assertEqual(pc.tesla_to_gauss(0.01), 100.0)
        self.assertAlmostEqual(pc.gauss_to_tesla(250.0), 0.025, places=12)
        self.assertAlmostEqual(const.erg_to_ev(const.ev_to_erg(1e-6)), 1e-6,
                               places=18)
        self.assertAlmostEqual(const.ev_to_erg(1.0), 1.602176634e-12,
                               places=24)

    def test_bad_magneton_ratio(self):
        with self.assertRaises(pc.DatabaseException):
            pc.PhysicalConstants(9.274e-21, 9.274e-24, 1.05e-27)

    def test_missing_file(self):
        with self.assertRaises(pc.DatabaseException):
            pc.load_database(pathlib.Path(self.tmp.name) / 'absent.json')

    def test_empty_file(self):
        with self.assertRaisesRegex(pc.DatabaseException, 'schema'):
            pc.load_database(self.write(''))

    def test_not_json(self):
        with self.assertRaises(pc.DatabaseException):
            pc.load_database(self.write('{"schema_version": '))

    def test_schema_version(self):
        raw = raw_database()
        raw['schema_version'] = 99
        with self.assertRaisesRegex(pc.DatabaseException, 'schema_version'):
            pc.parse_database(raw)

    def test_missing_section(self):
        raw = raw_database()
        del raw['materials']
        with self.assertRaisesRegex(pc.DatabaseException, 'materials'):
            pc.parse_database(raw)

    def test_negative_density_names_species(self):
        raw = raw_database()
        raw['species'][1]['orbital_densities'] = {
            'GaAs': {'s': -1.0, 's_star': 1.0}}
        with self.assertRaisesRegex(pc.DatabaseException, 'Ga'):
            pc.load_database(self.write(json.dumps(raw)))

    def test_bad_spin(self):
        raw = raw_database()
        raw['species'][0]['isotopes'][0]['spin'] = 1.3
        with self.assertRaisesRegex(pc.DatabaseException, 'In'):
            pc.parse_database(raw)

    def test_unknown_species_in_material(self):
        raw = copy.deepcopy(raw_database())
        raw['materials'][0]['anion'] = 'Sb'
        with self.assertRaisesRegex(pc.DatabaseException, 'Sb'):
            pc.parse_database(raw)

    def test_isotopes_sorted_by_abundance(self):
        raw = raw_database()
        raw['species'][1]['isotopes'].reverse()
        db = pc.parse_database(raw)
        self.assertEqual(db.species_for('Ga').dominant.mass_number, 69)

    def test_host_required_when_ambiguous(self):
        arsenic = test_utils.database().species_for('As')
        with self.assertRaises(pc.CalibrationException):
            arsenic.densities()
        phi_s, phi_s_star = arsenic.phis('GaAs')
        self.assertGreater(phi_s, 0)
        self.assertTrue(math.isclose(phi_s_star, 0.30 * phi_s))


if __name__ == '__main__':
    unittest.main()
