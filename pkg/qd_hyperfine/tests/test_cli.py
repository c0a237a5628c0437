"""Command line entry points and exit codes.
"""
import contextlib
import io
import json
import pathlib
import tempfile
import unittest

from qd_hyperfine import cli
from qd_hyperfine import pipeline as pl

BASE_DIR = pathlib.Path(__file__).parent
DESK_CONFIG = BASE_DIR / 'data' / 'desk_config.json'


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main(['-q'] + list(argv))
    return code, out.getvalue(), err.getvalue()


class CliTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = pathlib.Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, **changes):
        with open(str(DESK_CONFIG)) as fin:
            raw = json.load(fin)
        for section, values in changes.items():
            if isinstance(values, dict):
                raw[section] = dict(raw.get(section, {}), **values)
            else:
                raw[section] = values
        path = self.dir / 'run.json'
        path.write_text(json.dumps(raw))
        return path

    def test_defaults(self):
        code, out, _ = call('defaults')
        self.assertEqual(code, cli.EXIT_OK)
        self.assertEqual(json.loads(out)["geometry"]["base_diameter"], 15.0)

    def test_validate(self):
        code, out, _ = call('validate', str(DESK_CONFIG))
        self.assertEqual(code, cli.EXIT_OK)
        self.assertTrue(json.loads(out)["valid"])

    def test_validation_errors(self):
        path = self.write_config(bath={"mc_samples": -5},
                                 electronic={"tier": "sp3d5s*"})
        code, out, err = call('validate', str(path))
        self.assertEqual(code, cli.EXIT_VALIDATION)
        self.assertEqual(out, '')
        self.assertIn('bath.mc_samples', err)
        self.assertIn('electronic.parameters', err)

    def test_missing_config(self):
        code, _, _ = call('validate', str(self.dir / 'nothing.json'))
        self.assertEqual(code, cli.EXIT_IO)

    def test_run_and_report(self):
        path = self.write_config(bath={"sources": ["random-spins"]},
                                 budget={"orbital_spacing": 1e-5})
        code, out, _ = call('run', str(path), '-o', str(self.dir / 'out'))
        self.assertEqual(code, cli.EXIT_OK)
        summary = json.loads(out)
        self.assertEqual(summary["status"], 'complete')
        self.assertEqual(summary["seed"], 5)
        code, out, _ = call('report', str(self.dir / 'out'))
        self.assertEqual(code, cli.EXIT_OK)
        lines = out.splitlines()
        self.assertTrue(lines[1].startswith('random-spins'))
        self.assertFalse(lines[2].startswith(('alloy', 'interface')))
        self.assertIn('no admissible J', lines)

    def test_single_stage_commands(self):
        path = self.write_config(bath={"sources": ["random-spins"]})
        out = self.dir / 'out'
        code, text, _ = call('hyperfine', str(path), '-o', str(out))
        self.assertEqual(code, cli.EXIT_OK)
        summary = json.loads(text)
        self.assertEqual(summary["status"], 'partial')
        self.assertEqual(sorted(summary["stages"]), [
            'base/electronic', 'base/geometry', 'base/hyperfine',
            'base/strain'])
        self.assertTrue((out / 'base' / 'hyperfine' / 'map.txt').is_file())

        code, text, _ = call('run', str(path), '-o', str(out),
                             '--stage', 'spinbath')
        self.assertEqual(code, cli.EXIT_OK)
        stages = json.loads(text)["stages"]
        self.assertEqual(stages['base/hyperfine'], 'skipped')
        self.assertEqual(stages['spinbath'], 'done')
        self.assertNotIn('errorbudget', stages)
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                cli.main(['run', str(path), '--stage', 'relax'])

    def test_stage_failure(self):
        params = self.dir / 'tb.json'
        params.write_text('not json')
        path = self.write_config(bath={"sources": ["random-spins"]},
                                 electronic={"parameters": str(params)})
        code, _, _ = call('run', str(path), '-o', str(self.dir / 'out'))
        self.assertEqual(code, cli.EXIT_STAGE)
        manifest = pl.read_manifest(self.dir / 'out')
        self.assertEqual(manifest.failed_stage, 'base/electronic')

    def test_locked_output(self):
        out = self.dir / 'out'
        out.mkdir()
        pl.lock(out)
        path = self.write_config(bath={"sources": ["random-spins"]})
        code, _, _ = call('run', str(path), '-o', str(out))
        self.assertEqual(code, cli.EXIT_IO)

    def test_report_without_manifest(self):
        code, _, _ = call('report', str(self.dir))
        self.assertEqual(code, cli.EXIT_STAGE)

    def test_calibrate(self):
        code, out, _ = call('calibrate')
        self.assertEqual(code, cli.EXIT_OK)
        self.assertTrue(json.loads(out))

    def test_structure(self):
        export = self.dir / 'dot.txt'
        code, out, _ = call('structure', '--diameter', '3', '--height', '1.5',
                            '--margin-lateral', '1', '--margin-vertical',
                            '1', '--export', str(export))
        self.assertEqual(code, cli.EXIT_OK)
        info = json.loads(out)
        self.assertGreater(info["counts"]["dot"], 0)
        self.assertEqual(info["sites"], info["counts"]["sites"])
        self.assertTrue(export.is_file())

    def test_budget(self):
        code, out, _ = call('budget', '--exchange', '5e-4',
                            '--orbital-spacing', '0.1', '--zeeman', '1e-6')
        self.assertEqual(code, cli.EXIT_OK)
        rows = json.loads(out)
        self.assertEqual(rows["verdicts"], ["admissible J: 0.1 - 1 meV"])
        code, out, _ = call('budget', '--exchange', '5e-4',
                            '--orbital-spacing', '0.1', '--zeeman', '1e-6',
                            '--table')
        self.assertEqual(code, cli.EXIT_OK)
        self.assertIn('swap', out)
        code, _, err = call('budget', '--exchange', '0',
                            '--orbital-spacing', '0.1', '--zeeman', '1e-6')
        self.assertEqual(code, cli.EXIT_VALIDATION)
        self.assertIn('exchange J', err)


if __name__ == '__main__':
    unittest.main()
