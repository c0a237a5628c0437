"""End to end run of the bundled example configuration.

Takes tens of minutes; enabled with QD_HYPERFINE_SLOW=1.
"""
import math
import os
import pathlib
import tempfile
import unittest

import attr

import qd_hyperfine.config as cf
import qd_hyperfine.hyperfine as hf
import qd_hyperfine.pipeline as pl

SLOW = os.environ.get('QD_HYPERFINE_SLOW') == '1'


@unittest.skipUnless(SLOW, "set QD_HYPERFINE_SLOW=1 to run")
class ExampleRunTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.out = pathlib.Path(cls.tmp.name) / 'example'
        cfg = attr.evolve(cf.load_example(), output_dir=str(cls.out))
        cls.pipeline = pl.Pipeline(cfg)
        cls.manifest = cls.pipeline.run()
        bath = cls.pipeline.artifact('spinbath')
        cls.bath = bath
        cls.sources = {s["source"]: s for s in bath["sources"]}

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_complete(self):
        self.assertEqual(self.manifest.status, 'complete')
        lines = pl.report(self.out).splitlines()
        rows = [l.split()[0] for l in lines[1:5]]
        self.assertEqual(rows, ['random-spins', 'size-distribution', 'alloy',
                                'interface'])

    def test_ground_state_is_s_like(self):
        info = self.pipeline.artifact('base/electronic')["info"]
        self.assertGreater(info["s_character"][0], 0.9)
        self.assertEqual(info["hermiticity_error"], 0.0)
        self.assertGreater(info["orbital_spacing_ev"], 0.0)

    def test_coupling_magnitudes(self):
        hmap = self.pipeline.artifact('base/hyperfine')
        structure = self.pipeline.artifact('base/strain')
        self.assertGreater(hmap.max_coupling, 1e-9)
        self.assertLess(hmap.max_coupling, 1e-7)
        ratio = hf.anion_cation_ratio(hmap, structure)
        self.assertGreater(ratio, 1.2)
        self.assertLess(ratio, 2.5)

    def test_random_spin_spread(self):
        s = self.sources['random-spins']
        self.assertGreater(s["delta_b_g"], 10.0)
        self.assertLess(s["delta_b_g"], 1000.0)
        self.assertGreater(s["delta_e_ev"], 1e-7)
        self.assertLess(s["delta_e_ev"], 1e-5)
        self.assertGreater(s["t2_star_s"], 1e-11)
        self.assertLess(s["t2_star_s"], 1e-9)
        mc = self.bath["monte_carlo"]
        self.assertLess(abs(mc["delta_b_t"] - s["delta_b_t"]),
                        3 * mc["stderr_t"])

    def test_source_ordering(self):
        b = {k: v["delta_b_t"] for k, v in self.sources.items()}
        self.assertGreater(b['random-spins'], b['alloy'])
        self.assertGreater(b['alloy'], b['interface'])
        self.assertGreater(b['size-distribution'], 0.0)

    def test_alloy_wavefunctions_nearly_identical(self):
        freezing = self.bath["alloy_freezing"]
        self.assertGreaterEqual(freezing["min_overlap"], 0.99)
        self.assertLessEqual(freezing["density_fluctuation"]["mean"], 1e-3)

    def test_polarized_field(self):
        field = self.bath["polarized_field_t"]
        self.assertTrue(math.isfinite(field))
        self.assertGreater(field, 0.1)
        self.assertLess(field, 10.0)


if __name__ == '__main__':
    unittest.main()
