"""Unit tests for electronic.
"""
import json
import math
import pathlib
import tempfile
import unittest

import attr
import numpy as np
import scipy.linalg

import qd_hyperfine.electronic as el
import qd_hyperfine.geometry as geo
from qd_hyperfine.slater_koster import HamiltonianException
from . import utils as test_utils


def params(tier='sp3s*'):
    return el.load_parameters(tier=tier)


def bulk(material='GaAs', cells=(2, 2, 2), lattice_constant=None):
    return geo.build_bulk(material, cells=cells, db=test_utils.database(),
                          lattice_constant=lattice_constant)


class ParameterTests(unittest.TestCase):
    def test_bundled_tiers(self):
        for tier in ('s', 'sp3s*'):
            p = params(tier)
            self.assertEqual(p.tier, tier)
            self.assertEqual(set(p.materials), {'GaAs', 'InAs'})
        self.assertEqual(params().orbitals, ('s', 'px', 'py', 'pz', 's*'))

    def test_vogl_conversion(self):
        gaas = params().material('GaAs')
        self.assertTrue(math.isclose(gaas.integrals['s,s,sigma'],
                                     -6.4513 / 4))
        self.assertTrue(math.isclose(gaas.integrals['p,p,sigma']
                                     + 2 * gaas.integrals['p,p,pi'],
                                     3 * 1.9546 / 4))

    def test_missing_tier(self):
        with self.assertRaisesRegex(HamiltonianException, 'sp3d5s'):
            params('sp3d5s*')

    def test_missing_file(self):
        with self.assertRaises(HamiltonianException):
            el.load_parameters('/nonexistent/tb.json')

    def test_bad_files(self):
        with open(str(el.DEFAULT_PARAMETERS)) as fin:
            raw = json.load(fin)
        bad = dict(raw, schema_version=7)
        with self.assertRaises(HamiltonianException):
            el.parse_parameters(bad, 's')
        gaas = raw['tiers']['s']['materials']['GaAs']
        del gaas['onsite']['cation']['s']
        with self.assertRaisesRegex(HamiltonianException, 'GaAs'):
            el.parse_parameters(raw, 's')
        with tempfile.TemporaryDirectory() as tmp:
            path = pathlib.Path(tmp) / 'tb.json'
            path.write_text('{"schema_version": 1, ')
            with self.assertRaises(HamiltonianException):
                el.load_parameters(path, 's')


class BandEdgeTests(unittest.TestCase):
    def test_gaas_gamma(self):
        vbm, cbm = el.bulk_band_edges('GaAs', params(), test_utils.database())
        self.assertAlmostEqual(vbm, 0.0, delta=0.05)
        self.assertAlmostEqual(cbm, 1.55, delta=0.05)

    def test_inas_gamma(self):
        vbm, cbm = el.bulk_band_edges('InAs', params(), test_utils.database())
        self.assertAlmostEqual(cbm - vbm, 0.43, delta=0.05)
        self.assertAlmostEqual(vbm, 0.21, delta=1e-3)

    def test_s_tier(self):
        vbm, cbm = el.bulk_band_edges('GaAs', params('s'),
                                      test_utils.database())
        self.assertEqual(vbm, 0.0)
        self.assertAlmostEqual(cbm, 1.52, delta=1e-9)

    def test_bloch_hamiltonian_hermitian(self):
        h = el.bulk_hamiltonian('GaAs', params(), test_utils.database(),
                                k=(1.0, 2.0, -0.5))
        self.assertTrue(np.allclose(h, h.conj().T, atol=1e-14))

    def test_resolve_sigma(self):
        db = test_utils.database()
        self.assertEqual(el.resolve_sigma(0.7, 'InAs', params(), db), 0.7)
        vbm, cbm = el.bulk_band_edges('InAs', params(), db)
        self.assertTrue(math.isclose(
            el.resolve_sigma('midgap', 'InAs', params(), db),
            0.5 * (vbm + cbm)))
        self.assertEqual(el.resolve_sigma('conduction', 'InAs', params(), db),
                         cbm)
        with self.assertRaises(HamiltonianException):
            el.resolve_sigma('top', 'InAs', params(), db)


class AssembleTests(unittest.TestCase):
    def test_hermitian_and_sparsity(self):
        structure = test_utils.small_dot()
        for tier in ('s', 'sp3s*'):
            ham = el.assemble(structure, params(tier), test_utils.database())
            norb = len(params(tier).orbitals)
            self.assertEqual(ham.dimension, structure.site_count * norb)
            self.assertEqual(ham.hermiticity_error(), 0.0)
            anion, cation, _ = geo.bond_pairs(structure)
            bonded = set(zip(anion.tolist(), cation.tolist()))
            bonded |= {(c, a) for a, c in bonded}
            coo = ham.matrix.tocoo()
            pairs = np.stack([coo.row // norb, coo.col // norb], axis=1)
            pairs = np.unique(pairs[pairs[:, 0] != pairs[:, 1]], axis=0)
            self.assertEqual(len(pairs), len(bonded))
            for i, j in pairs:
                self.assertIn((int(i), int(j)), bonded)

    def test_s_tier_pattern(self):
        structure = test_utils.small_dot()
        ham = el.assemble(structure, params('s'), test_utils.database())
        self.assertEqual(ham.bond_count, len(geo.bond_pairs(structure)[0]))
        self.assertEqual(ham.matrix.nnz,
                         structure.site_count + 2 * ham.bond_count)
        diag = ham.matrix.diagonal()
        dot = structure.region == geo.DOT
        self.assertTrue(np.allclose(diag[dot & (structure.sublattice
                                                == geo.CATION)],
                                    16.43 + 0.21))
        far = np.flatnonzero(structure.region == geo.BUFFER)
        self.assertTrue(np.any(np.isclose(diag[far], 17.52)))

    def test_deterministic(self):
        structure = test_utils.small_dot()
        a = el.assemble(structure, params(), test_utils.database())
        b = el.assemble(structure, params(), test_utils.database())
        self.assertEqual((a.matrix != b.matrix).nnz, 0)

    def test_strain_corrections_on_ideal_grid(self):
        structure = bulk()
        on = el.assemble(structure, params(), test_utils.database(), True)
        off = el.assemble(structure, params(), test_utils.database(), False)
        self.assertLess(abs(on.matrix - off.matrix).max(), 1e-12)

    def test_harrison_scaling(self):
        a = test_utils.database().material('GaAs').lattice_constant
        structure = bulk(lattice_constant=1.01 * a)
        on = el.assemble(structure, params('s'), test_utils.database(), True)
        off = el.assemble(structure, params('s'), test_utils.database(),
                          False)
        anion, cation, _ = geo.bond_pairs(structure)
        i, j = int(anion[0]), int(cation[0])
        # periodic 2x2x2 cells: each pair is bonded once
        self.assertTrue(math.isclose(on.matrix[i, j],
                                     off.matrix[i, j] / 1.0201))
        self.assertTrue(math.isclose(off.matrix[i, j], -4.0))

    def test_lowdin_shift(self):
        a = test_utils.database().material('GaAs').lattice_constant
        structure = bulk(lattice_constant=1.01 * a)
        p = attr.evolve(params('s'), lowdin={'s': 2.0})
        shifted = el.assemble(structure, p, test_utils.database(), True)
        plain = el.assemble(structure, params('s'), test_utils.database(),
                            True)
        diff = shifted.matrix.diagonal() - plain.matrix.diagonal()
        self.assertTrue(np.allclose(diff, 0.02))

    def test_missing_material(self):
        p = params()
        only_gaas = attr.evolve(p, materials={'GaAs': p.material('GaAs')})
        with self.assertRaisesRegex(HamiltonianException, 'InAs'):
            el.assemble(test_utils.small_dot(), only_gaas,
                        test_utils.database())

    def test_bulk_supercell_gamma(self):
        # the Gamma states of the supercell include the bulk band edges
        structure = bulk(cells=(1, 1, 1))
        ham = el.assemble(structure, params(), test_utils.database(), False)
        energies = scipy.linalg.eigvalsh(ham.matrix.toarray())
        vbm, cbm = el.bulk_band_edges('GaAs', params(), test_utils.database())
        self.assertLess(np.min(np.abs(energies - cbm)), 1e-9)
        self.assertLess(np.min(np.abs(energies - vbm)), 1e-9)

    def test_shifted(self):
        ham = el.assemble(bulk(), params('s'), test_utils.database())
        moved = ham.shifted(0.25)
        self.assertTrue(np.allclose(moved.matrix.diagonal(),
                                    ham.matrix.diagonal() + 0.25))


if __name__ == '__main__':
    unittest.main()
