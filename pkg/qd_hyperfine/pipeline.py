"""Staged pipeline: geometry -> strain -> electronic -> hyperfine per
structure variant, then spinbath and errorbudget over all variants.

A stage is skipped when its input hash matches the previous manifest and
its recorded outputs are still on disk with the recorded sha256.
"""
import json
import os
import pathlib
import time

import attr
import numpy as np
import scipy

from . import __version__
from . import errorbudget as eb
from . import geometry as geo
from . import hyperfine as hf
from . import spinbath as sb
from . import solver
from .electronic import assemble, load_parameters, resolve_sigma
from .physcore import load_database
from .strain import VffModel, relax, strain_summary
from .utils import (QdHyperfineException, dumps, hash_file, hash_obj,
                    stage_logger, to_jsonable)
from .utils import logger as log

MANIFEST = 'manifest.json'
LOCKFILE = '.lock'
VARIANT_STAGES = ('geometry', 'strain', 'electronic', 'hyperfine')
GLOBAL_STAGES = ('spinbath', 'errorbudget')
STAGES = VARIANT_STAGES + GLOBAL_STAGES
BASE = 'base'


class PipelineException(QdHyperfineException):
    pass


class StageException(QdHyperfineException):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__("Stage {} failed: {}".format(stage, cause))


class LockException(QdHyperfineException):
    pass


class ReportException(QdHyperfineException):
    pass


@attr.s
class StageRecord:
    name = attr.ib()
    input_hash = attr.ib(default='')
    status = attr.ib(default='pending')
    # output name -> {"path": relative path, "sha256": ...}
    outputs = attr.ib(factory=dict)
    seconds = attr.ib(default=0.0)
    error = attr.ib(default=None)


@attr.s
class RunManifest:
    seed = attr.ib()
    config_hash = attr.ib()
    versions = attr.ib()
    stages = attr.ib(factory=dict)
    status = attr.ib(default='running')
    failed_stage = attr.ib(default=None)

    def as_dict(self):
        return to_jsonable(attr.asdict(self))

    @classmethod
    def from_dict(cls, raw):
        stages = {k: StageRecord(**v) for k, v in raw['stages'].items()}
        return cls(raw['seed'], raw['config_hash'], raw['versions'], stages,
                   raw['status'], raw.get('failed_stage'))


@attr.s(frozen=True)
class Variant:
    name = attr.ib()
    geometry = attr.ib()
    disorder = attr.ib()
    seed = attr.ib()


def versions():
    return {"qd_hyperfine": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__}


def variants(cfg):
    """Structures the configured bath sources need, base first.
    """
    base_geometry = cfg.dot_geometry()
    out = [Variant(BASE, base_geometry, cfg.disorder_spec(), cfg.seed)]
    bath = cfg.bath
    if 'size-distribution' in bath['sources']:
        dd, dh = bath['size_delta_diameter'], bath['size_delta_height']
        g = cfg.geometry
        for name, sign in (('size-minus', -1), ('size-plus', 1)):
            geometry = cfg.dot_geometry(g['base_diameter'] + sign * dd,
                                        g['height'] + sign * dh)
            out.append(Variant(name, geometry, cfg.disorder_spec(), cfg.seed))
    if 'alloy' in bath['sources']:
        disorder = attr.evolve(cfg.disorder_spec(), mode='alloy',
                               alloy_fraction=bath['alloy_fraction'])
        for i in range(bath['alloy_realizations']):
            seed = geo.realization_seed(cfg.seed, i)
            out.append(Variant('alloy-{}'.format(i), base_geometry,
                               attr.evolve(disorder, seed=seed), seed))
    return out


def lock(output_dir):
    path = pathlib.Path(output_dir) / LOCKFILE
    try:
        fd = os.open(str(path), os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockException(
            "Output directory {} is locked by another run ({})"
            .format(output_dir, path))
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    return path


def read_manifest(output_dir):
    path = pathlib.Path(output_dir) / MANIFEST
    if not path.is_file():
        return None
    with open(str(path)) as fin:
        return RunManifest.from_dict(json.load(fin))


def write_manifest(manifest, output_dir):
    path = pathlib.Path(output_dir) / MANIFEST
    with open(str(path), 'w') as fout:
        fout.write(dumps(manifest.as_dict()))
        fout.write('\n')
    return path


def _write_json(path, obj):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(str(path), 'w') as fout:
        fout.write(dumps(to_jsonable(obj)))
        fout.write('\n')
    return path


def _read_json(path):
    with open(str(path)) as fin:
        return json.load(fin)


class Pipeline:
    """One run over one output directory.
    """

    def __init__(self, cfg, db=None):
        self.cfg = cfg
        self.out = pathlib.Path(cfg.resolve(cfg.output_dir))
        self.db = db or load_database(cfg.database_path)
        self.variants = {v.name: v for v in variants(cfg)}
        self.previous = None
        self.manifest = None
        self._artifacts = {}
        self._db_hash = (hash_file(cfg.database_path)
                         if cfg.database_path else 'bundled')

    # bookkeeping

    def _dir(self, key):
        return self.out.joinpath(*key.split('/'))

    def _rel(self, path):
        return str(pathlib.Path(path).relative_to(self.out))

    def _output_hashes(self, key):
        record = self.manifest.stages[key]
        return {k: v['sha256'] for k, v in sorted(record.outputs.items())}

    def _cached(self, key, input_hash):
        if self.previous is None or key not in self.previous.stages:
            return None
        old = self.previous.stages[key]
        if old.input_hash != input_hash or old.status not in ('done',
                                                             'skipped'):
            return None
        for entry in old.outputs.values():
            path = self.out / entry['path']
            if not path.is_file() or hash_file(path) != entry['sha256']:
                return None
        return old

    def _stage_inputs(self, key, stage, variant):
        cfg = self.cfg
        inputs = {"stage": key, "versions": versions(),
                  "database": self._db_hash, "seed": cfg.seed}
        if variant is not None:
            v = self.variants[variant]
            inputs["variant"] = {"geometry": attr.asdict(v.geometry),
                                 "disorder": attr.asdict(v.disorder),
                                 "seed": v.seed}
        deps = []
        if stage == 'strain':
            inputs["strain"] = cfg.strain
            deps = [variant + '/geometry']
        elif stage == 'electronic':
            inputs["electronic"] = cfg.electronic["tier"]
            inputs["parameters"] = (hash_file(cfg.parameters_path)
                                    if cfg.parameters_path else 'bundled')
            inputs["solver"] = cfg.solver
            inputs["strain_enabled"] = cfg.strain["enabled"]
            deps = [variant + '/strain', variant + '/geometry']
        elif stage == 'hyperfine':
            inputs["hyperfine"] = cfg.hyperfine
            deps = [variant + '/electronic', variant + '/strain']
        elif stage == 'spinbath':
            inputs["bath"] = cfg.bath
            deps = ['{}/{}'.format(name, s) for name in self.variants
                    for s in ('hyperfine', 'electronic')]
        elif stage == 'errorbudget':
            inputs["budget"] = cfg.budget
            inputs["g_e"] = cfg.bath["g_e"]
            deps = ['spinbath', BASE + '/electronic']
        inputs["upstream"] = {d: self._output_hashes(d) for d in deps}
        return hash_obj(inputs)

    def _execute(self, key, stage, variant):
        slog = stage_logger(key)
        input_hash = self._stage_inputs(key, stage, variant)
        cached = self._cached(key, input_hash)
        if cached is not None:
            self.manifest.stages[key] = attr.evolve(
                cached, status='skipped', seconds=0.0, error=None)
            slog.info("unchanged, skipped")
            return
        record = StageRecord(key, input_hash, 'running')
        self.manifest.stages[key] = record
        start = time.perf_counter()
        try:
            compute = getattr(self, '_run_' + stage)
            outputs, artifact = compute(slog, key, variant)
        except (QdHyperfineException, KeyError, ValueError) as e:
            record.status = 'failed'
            record.error = str(e)
            record.seconds = time.perf_counter() - start
            raise StageException(key, e)
        record.outputs = {
            name: {"path": self._rel(path), "sha256": hash_file(path)}
            for name, path in sorted(outputs.items())}
        record.status = 'done'
        record.seconds = time.perf_counter() - start
        self._artifacts[key] = artifact
        slog.info("done in %.2f s", record.seconds)

    def artifact(self, key):
        """In-memory artifact of a stage, loaded from disk when cached.
        """
        if key not in self._artifacts:
            stage = key.split('/')[-1]
            self._artifacts[key] = getattr(self, '_load_' + stage)(key)
        return self._artifacts[key]

    def _path(self, key, name):
        return self.out / self.manifest.stages[key].outputs[name]['path']

    def _meta(self, key, variant):
        return {"seed": self.cfg.seed, "variant": variant, "stage": key}

    # stages

    def _run_geometry(self, slog, key, variant):
        v = self.variants[variant]
        structure = geo.build_structure(v.geometry, v.disorder, v.seed,
                                        self.db)
        slog.info("%d sites: %s", structure.site_count, structure.counts())
        path = geo.export_structure(structure,
                                    self._dir(key) / 'structure.txt',
                                    extra=self._meta(key, variant))
        return ({"structure": path, "sidecar": path.with_suffix('.json')},
                structure)

    def _load_geometry(self, key):
        return geo.import_structure(self._path(key, 'structure'))

    def _run_strain(self, slog, key, variant):
        structure = self.artifact(variant + '/geometry')
        info = self._meta(key, variant)
        info["enabled"] = bool(self.cfg.strain["enabled"])
        outputs = {}
        if info["enabled"]:
            model = VffModel.from_database(self.db)
            s = self.cfg.strain
            result = relax(structure, model, s["tolerance"], s["max_iter"],
                           s["periodic"])
            structure = result.apply(structure)
            info.update({
                "energy_ev": result.energy,
                "iterations": result.iterations,
                "gradient_norm": result.gradient_norm,
                "summary": strain_summary(structure, model=model),
            })
            path = geo.export_structure(structure,
                                        self._dir(key) / 'relaxed.txt',
                                        extra=self._meta(key, variant))
            outputs["structure"] = path
            outputs["sidecar"] = path.with_suffix('.json')
        else:
            slog.info("strain disabled, keeping ideal positions")
        outputs["summary_json"] = _write_json(self._dir(key) / 'strain.json',
                                              info)
        return outputs, structure

    def _load_strain(self, key):
        outputs = self.manifest.stages[key].outputs
        if 'structure' in outputs:
            return geo.import_structure(self._path(key, 'structure'))
        return self.artifact(key.rsplit('/', 1)[0] + '/geometry')

    def _run_electronic(self, slog, key, variant):
        cfg = self.cfg
        structure = self.artifact(variant + '/strain')
        params = load_parameters(cfg.parameters_path, cfg.electronic["tier"])
        ham = assemble(structure, params, self.db,
                       strain_corrections=cfg.strain["enabled"])
        sv = cfg.solver
        sigma = resolve_sigma(sv["sigma"], structure.geometry.dot_material,
                              params, self.db)
        slog.info("H dimension %d, sigma %.4f eV", ham.dimension, sigma)
        states = solver.solve_ground_conduction(
            ham, sigma, k=sv["k"], tol=sv["tol"], method=sv["method"],
            max_states=sv["max_states"], above=True)
        outputs = {}
        for i, wf in enumerate(states):
            path = solver.write_wavefunction(
                wf, self._dir(key) / 'state_{}.npy'.format(i))
            outputs["state_{}".format(i)] = path
            outputs["state_{}_meta".format(i)] = path.with_suffix('.json')
        info = self._meta(key, variant)
        info.update({
            "sigma_ev": sigma,
            "dimension": ham.dimension,
            "hermiticity_error": ham.hermiticity_error(),
            "energies_ev": [wf.energy for wf in states],
            "s_character": [wf.s_character for wf in states],
            "orbital_spacing_ev": (solver.orbital_spacing(states)
                                   if len(states) > 1 else None),
        })
        outputs["summary_json"] = _write_json(
            self._dir(key) / 'electronic.json', info)
        return outputs, {"states": states, "info": info}

    def _load_electronic(self, key):
        outputs = self.manifest.stages[key].outputs
        states = [solver.read_wavefunction(self._path(key, name))
                  for name in sorted(outputs)
                  if name.startswith('state_') and not name.endswith('meta')]
        return {"states": states,
                "info": _read_json(self._path(key, 'summary_json'))}

    def _run_hyperfine(self, slog, key, variant):
        cfg = self.cfg
        structure = self.artifact(variant + '/strain')
        electronic = self.artifact(variant + '/electronic')
        wf_key = variant + '/electronic'
        hmap = hf.coupling_map(
            electronic["states"][0], structure, self.db,
            structure_id=geo.structure_digest(structure),
            wavefunction_id=self._output_hashes(wf_key)["state_0"])
        fraction = cfg.hyperfine["reach_fraction"]
        info = self._meta(key, variant)
        info.update(hf.summary(hmap, structure))
        info["reach_fraction"] = fraction
        info["reach_count_configured"] = hf.reach_count(hmap, fraction)
        d = self._dir(key)
        outputs = {"map": hf.write_map(hmap, structure, d / 'map.txt')}
        for axis in hf.AXES:
            prof = hf.profile(hmap, structure, axis,
                              cfg.hyperfine["profile_bin"])
            outputs["profile_" + axis] = hf.write_profile(
                prof, d / 'profile_{}.txt'.format(axis))
            info["outside_fraction_" + axis] = hf.outside_fraction(prof)
            try:
                info["decay_length_nm_" + axis] = hf.decay_length(prof)
            except hf.HyperfineException as e:
                slog.debug("no decay length along %s: %s", axis, e)
                info["decay_length_nm_" + axis] = None
        slog.info("max A %.3f neV, %d nuclei above %.2g max",
                  info["max_coupling_nev"], info["reach_count_configured"],
                  fraction)
        outputs["summary_json"] = _write_json(d / 'hyperfine.json', info)
        return outputs, hmap

    def _load_hyperfine(self, key):
        return hf.read_map(self._path(key, 'map'))

    def _map_and_structure(self, variant):
        return (self.artifact(variant + '/hyperfine'),
                self.artifact(variant + '/strain'))

    def _run_spinbath(self, slog, key, variant):
        cfg, db = self.cfg, self.db
        bath = cfg.bath
        g_e = bath["g_e"]
        hmap, structure = self._map_and_structure(BASE)
        stats = []
        info = {"seed": cfg.seed, "stage": key,
                "polarized_field_t": sb.polarized_magnitude(hmap, structure,
                                                            db, g_e)}
        sources = bath["sources"]
        if 'random-spins' in sources:
            stats.append(sb.delta_unpolarized_closed_form(hmap, structure, db,
                                                          g_e))
            mc = sb.delta_unpolarized_monte_carlo(
                hmap, structure, db, g_e, bath["mc_samples"], cfg.seed,
                bath["workers"])
            info["monte_carlo"] = mc.as_dict()
        if 'size-distribution' in sources:
            by_geometry = {}
            for name in ('size-minus', BASE, 'size-plus'):
                by_geometry[self.variants[name].geometry] = name
            ordered = [self.variants[n].geometry
                       for n in ('size-minus', BASE, 'size-plus')]
            stats.append(sb.delta_size(
                ordered,
                lambda g: self._map_and_structure(by_geometry[g]), db, g_e))
        if 'alloy' in sources:
            names = sorted(n for n in self.variants if n.startswith('alloy-'))
            amap, astructure = self._map_and_structure(names[0])
            stats.append(sb.delta_disorder(amap, astructure, db, g_e, 'alloy',
                                           bath["alloy_fraction"]))
            wfs = [self.artifact(n + '/electronic')["states"][0]
                   for n in names]
            overlaps, fluctuation = sb.overlap_and_density_fluctuation(wfs)
            info["alloy_freezing"] = {
                "overlaps": [{"a": names[a], "b": names[b], "overlap": ov}
                             for a, b, ov in overlaps],
                "min_overlap": min(ov for _, _, ov in overlaps),
                "density_fluctuation": fluctuation,
            }
        if 'interface' in sources:
            tagged = geo.retag_interface(structure,
                                         bath["interface_thickness"])
            stats.append(sb.delta_disorder(hmap, tagged, db, g_e,
                                           'interface'))
        for s in stats:
            slog.info("%-18s dB_N = %.4g G", s.source, s.delta_b_gauss)
        info["sources"] = [s.as_dict() for s in stats]
        d = self._dir(key)
        d.mkdir(parents=True, exist_ok=True)
        outputs = {
            "table": sb.write_table(stats, d / 'table.txt'),
            "summary_json": _write_json(d / 'spinbath.json', info),
        }
        return outputs, to_jsonable(info)

    def _load_spinbath(self, key):
        return _read_json(self._path(key, 'summary_json'))

    def _run_errorbudget(self, slog, key, variant):
        cfg = self.cfg
        bu = dict(cfg.budget)
        bath = self.artifact('spinbath')
        source = {s["source"]: s for s in bath["sources"]}
        chosen = source.get(bu["zeeman_source"])
        spacing = bu["orbital_spacing"]
        if spacing is None:
            spacing = self.artifact(BASE + '/electronic')["info"][
                "orbital_spacing_ev"]
        zeeman = bu["zeeman_difference"]
        drift_par, drift_perp = bu["drift_parallel"], bu["drift_perpendicular"]
        if chosen is not None:
            if zeeman is None:
                zeeman = chosen["delta_e_ev"]
            if drift_par is None:
                drift_par = chosen["delta_b_t"]
            if drift_perp is None:
                drift_perp = chosen["delta_b_t"]
        if spacing is None or zeeman is None:
            raise eb.BudgetException(
                "Budget needs orbital_spacing and zeeman_difference")
        params = eb.OperationParams(
            exchange=bu["exchange"], orbital_spacing=spacing,
            zeeman_difference=zeeman, static_field=bu["static_field"],
            esr_amplitude=bu["esr_amplitude"],
            field_parallel=bu["field_parallel"],
            field_perpendicular=bu["field_perpendicular"],
            drift_parallel=drift_par or 0.0,
            drift_perpendicular=drift_perp or 0.0,
            threshold=bu["threshold"], g_e=cfg.bath["g_e"],
            bohr_magneton=self.db.constants.bohr_magneton_ev_per_tesla)
        budget = eb.evaluate(params)
        for line in eb.verdicts(budget):
            slog.info(line)
        rows = eb.budget_rows(budget)
        rows["seed"] = cfg.seed
        rows["zeeman_source"] = bu["zeeman_source"]
        d = self._dir(key)
        text = d / 'budget.txt'
        d.mkdir(parents=True, exist_ok=True)
        with open(str(text), 'w') as fout:
            fout.write(eb.format_budget(budget) + '\n')
        outputs = {"summary_json": _write_json(d / 'budget.json', rows),
                   "table": text}
        return outputs, rows

    def _load_errorbudget(self, key):
        return _read_json(self._path(key, 'summary_json'))

    # driver

    def run(self, until=None) -> RunManifest:
        """Run every stage, or stop after stage `until' for every variant.

        A run cut short this way is recorded as 'partial'; a later full run
        reuses whatever it produced.
        """
        if until is not None and until not in STAGES:
            raise PipelineException("Unknown stage {!r}, expected one of {}"
                                    .format(until, list(STAGES)))
        last = STAGES.index(until) if until else len(STAGES) - 1
        self.out.mkdir(parents=True, exist_ok=True)
        lock_path = lock(self.out)
        try:
            self.previous = read_manifest(self.out)
            self.manifest = RunManifest(self.cfg.seed,
                                        hash_obj(self.cfg.raw), versions())
            _write_json(self.out / 'config.json', self.cfg.raw)
            try:
                for name in self.variants:
                    for stage in VARIANT_STAGES[:last + 1]:
                        self._execute('{}/{}'.format(name, stage), stage,
                                      name)
                for stage in STAGES[len(VARIANT_STAGES):last + 1]:
                    self._execute(stage, stage, None)
            except StageException as e:
                self.manifest.status = 'failed'
                self.manifest.failed_stage = e.stage
                log.error("%s", e)
                raise
            finally:
                write_manifest(self.manifest, self.out)
            self.manifest.status = ('complete' if last == len(STAGES) - 1
                                    else 'partial')
            write_manifest(self.manifest, self.out)
        finally:
            lock_path.unlink()
        return self.manifest


def run(cfg, db=None, until=None) -> RunManifest:
    return Pipeline(cfg, db).run(until)


def _g(value, digits=4):
    """Number for a table cell; JSON stores infinities as strings.
    """
    if isinstance(value, str):
        return value
    return "{:.{}g}".format(value, digits)


def report(output_dir):
    """Human summary of a finished run: one row per bath source plus the
    error-budget verdicts.
    """
    manifest = read_manifest(output_dir)
    if manifest is None:
        raise ReportException("No manifest in {}".format(output_dir))
    out = pathlib.Path(output_dir)
    record = manifest.stages.get('spinbath')
    if record is None or record.status not in ('done', 'skipped'):
        raise ReportException(
            "Manifest in {} has no completed bath source".format(output_dir))
    bath = _read_json(out / record.outputs['summary_json']['path'])
    if not bath["sources"]:
        raise ReportException("Manifest lists no bath sources")
    lines = ["{:<18} {:>12} {:>12} {:>12}  {}".format(
        'Source', 'dB_N (G)', 'dE (eV)', 'T2* (s)', 'method')]
    for s in bath["sources"]:
        lines.append("{:<18} {:>12} {:>12} {:>12}  {}".format(
            s["source"], _g(s["delta_b_g"]), _g(s["delta_e_ev"]),
            _g(s["t2_star_s"]), s["method"]))
    if "monte_carlo" in bath:
        mc = bath["monte_carlo"]
        lines.append("monte carlo check: {} +- {} G over {} samples"
                     .format(_g(mc["delta_b_g"]), _g(mc["stderr_g"], 2),
                             mc["n_samples"]))
    if "alloy_freezing" in bath:
        fr = bath["alloy_freezing"]
        lines.append("alloy realizations: min overlap {:.4f}, density "
                     "fluctuation {:.2e}".format(
                         fr["min_overlap"], fr["density_fluctuation"]["mean"]))
    budget = manifest.stages.get('errorbudget')
    if budget is not None and budget.status in ('done', 'skipped'):
        rows = _read_json(out / budget.outputs['summary_json']['path'])
        lines.append('')
        lines.append("swap {:.3g}, leakage {:.3g}, detuning {:.3g}".format(
            rows["swap_error"], rows["leakage"], rows["detuning_error"]))
        lines.extend(rows["verdicts"])
    return '\n'.join(lines)
