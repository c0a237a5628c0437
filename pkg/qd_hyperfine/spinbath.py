"""Effective nuclear field B_N and its spread under bath inhomogeneities.

Fields are Tesla in machine-readable output and Gauss in summaries;
energies are eV.
"""
import math
import typing as t
from concurrent.futures import ThreadPoolExecutor

import attr
import numpy as np

from . import geometry as geo
from .physcore import tesla_to_gauss
from .utils import QdHyperfineException
from .utils import logger as log

DEFAULT_G_E = 2.0
SOURCES = ('random-spins', 'size-distribution', 'alloy', 'interface')
MC_CHUNK = 256
UNPOLARIZED = 'unpolarized-sample'
POLARIZED = 'polarized'


class BathException(QdHyperfineException):
    pass


@attr.s
class NuclearSpinConfig:
    # (N, 3) expectation values <I_j>
    spins = attr.ib(repr=False)
    mode = attr.ib(default=UNPOLARIZED)
    seed = attr.ib(default=None)
    direction = attr.ib(default=None)

    @property
    def site_count(self):
        return len(self.spins)


@attr.s
class FieldStatistics:
    source = attr.ib()
    method = attr.ib()
    # Tesla
    delta_b = attr.ib()
    delta_e = attr.ib()
    t2_star = attr.ib()
    direction = attr.ib(default='random')
    field = attr.ib(default=None)
    n_samples = attr.ib(default=None)
    stderr = attr.ib(default=None)
    degenerate = attr.ib(default=False)
    fields = attr.ib(factory=list)
    labels = attr.ib(factory=list)

    @property
    def delta_b_gauss(self):
        return tesla_to_gauss(self.delta_b)

    def as_dict(self):
        out = {
            "source": self.source,
            "method": self.method,
            "direction": self.direction,
            "delta_b_t": self.delta_b,
            "delta_b_g": self.delta_b_gauss,
            "delta_e_ev": self.delta_e,
            "t2_star_s": self.t2_star,
            "degenerate": self.degenerate,
        }
        if self.field is not None:
            out["field_t"] = [float(v) for v in self.field]
        if self.n_samples is not None:
            out["n_samples"] = self.n_samples
            out["stderr_t"] = self.stderr
            out["stderr_g"] = tesla_to_gauss(self.stderr)
        if self.fields:
            out["polarized_fields_t"] = dict(zip(self.labels, self.fields))
        return out


def _field_scale(db, g_e):
    if not g_e > 0:
        raise BathException("Electron g factor must be > 0, got {}"
                            .format(g_e))
    return g_e * db.constants.bohr_magneton_ev_per_tesla


def site_spins(structure, db):
    """Nuclear spin I per site, honoring sampled isotopes.
    """
    spins = np.zeros(structure.site_count)
    for el in sorted(set(structure.elements.tolist())):
        species = db.species_for(el)
        mask = structure.elements == el
        table = np.array([iso.spin for iso in species.isotopes])
        spins[mask] = table[structure.isotope[mask]]
    return spins


def _check_lengths(hmap, n, what):
    if hmap.site_count != n:
        raise BathException(
            "Hyperfine map has {} sites but {} has {}"
            .format(hmap.site_count, what, n))


def dephasing(delta_b, g_e, db):
    """(Delta E in eV, T2* in s) for a field spread `delta_b' in Tesla.
    """
    if delta_b < 0:
        raise BathException("Field spread must be >= 0")
    delta_e = _field_scale(db, g_e) * delta_b
    if delta_e == 0:
        return 0.0, math.inf
    return delta_e, db.constants.reduced_planck_ev_s / delta_e


def _stats(source, method, delta_b, g_e, db, **kwargs):
    delta_e, t2 = dephasing(delta_b, g_e, db)
    return FieldStatistics(source, method, float(delta_b), delta_e, t2,
                           **kwargs)


def effective_field(hmap, config: NuclearSpinConfig, g_e, db):
    """B_N = sum_j A_j <I_j> / (g_e mu_B), Tesla.
    """
    _check_lengths(hmap, config.site_count, "the spin configuration")
    return hmap.coupling.dot(config.spins) / _field_scale(db, g_e)


def _draw(rng, spins):
    """Independent uniform projections m in {-I..I} on each axis.
    """
    u = rng.random((len(spins), 3))
    levels = 2.0 * spins + 1.0
    return np.floor(u * levels[:, None]) - spins[:, None]


def _sample_rng(seed, stream):
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def sample_unpolarized(structure, db, seed) -> NuclearSpinConfig:
    """Random unpolarized bath: E<I_j> = 0, E|<I_j>|^2 = I_j (I_j + 1).

    Each Cartesian component is a uniform projection over {-I..I}, whose
    second moment is I(I+1)/3.
    """
    spins = site_spins(structure, db)
    return NuclearSpinConfig(_draw(_sample_rng(seed, 0), spins),
                             UNPOLARIZED, seed)


def polarized_config(structure, db, direction=(0.0, 0.0, 1.0)):
    n = np.asarray(direction, dtype=float)
    length = np.linalg.norm(n)
    if length == 0:
        raise BathException("Polarization direction must be non-zero")
    n = n / length
    spins = site_spins(structure, db)
    return NuclearSpinConfig(spins[:, None] * n[None, :], POLARIZED,
                             direction=tuple(float(v) for v in n))


def delta_unpolarized_closed_form(hmap, structure, db, g_e=DEFAULT_G_E):
    _check_lengths(hmap, structure.site_count, "the structure")
    spins = site_spins(structure, db)
    delta_b = (math.sqrt(float(np.sum(hmap.coupling ** 2
                                      * spins * (spins + 1.0))))
               / _field_scale(db, g_e))
    return _stats('random-spins', 'closed-form', delta_b, g_e, db)


def _mc_fields(coupling, spins, seed, indices, scale):
    out = np.empty((len(indices), 3))
    for row, i in enumerate(indices):
        out[row] = coupling.dot(_draw(_sample_rng(seed, i), spins)) / scale
    return out


def _jackknife(fields):
    """Spread sqrt(<B^2> - <B>^2) and its jackknife standard error.
    """
    n = len(fields)
    if np.all(fields == fields[0]):
        return 0.0, (math.inf if n < 3 else 0.0)
    s1 = fields.sum(axis=0)
    sq = np.einsum('ij,ij->i', fields, fields)
    s2 = sq.sum()
    var = (s2 - s1.dot(s1) / n) / (n - 1)
    spread = math.sqrt(max(var, 0.0))
    if n < 3:
        return spread, math.inf
    m = n - 1
    loo_mean = (s1[None, :] - fields) / m
    loo_var = ((s2 - sq) - m * np.einsum('ij,ij->i', loo_mean, loo_mean)) \
        / (m - 1)
    loo = np.sqrt(np.clip(loo_var, 0.0, None))
    stderr = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return spread, stderr


def delta_unpolarized_monte_carlo(hmap, structure, db, g_e=DEFAULT_G_E,
                                  n_samples=1000, seed=0, workers=1,
                                  sample_streams=None):
    """Sample standard deviation of B_N over independent unpolarized draws.

    Sample i draws from its own stream, so the estimate does not depend on
    `workers'. `sample_streams' overrides the stream index of each sample.
    """
    if n_samples < 2:
        raise BathException("Monte Carlo needs at least 2 samples, got {}"
                            .format(n_samples))
    _check_lengths(hmap, structure.site_count, "the structure")
    streams = list(range(n_samples)) if sample_streams is None \
        else [int(s) for s in sample_streams]
    if len(streams) != n_samples:
        raise BathException("Expected {} sample streams, got {}"
                            .format(n_samples, len(streams)))
    spins = site_spins(structure, db)
    scale = _field_scale(db, g_e)
    chunks = [streams[i:i + MC_CHUNK]
              for i in range(0, n_samples, MC_CHUNK)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda c: _mc_fields(hmap.coupling, spins, seed, c, scale),
                chunks))
    else:
        parts = [_mc_fields(hmap.coupling, spins, seed, c, scale)
                 for c in chunks]
    fields = np.concatenate(parts)
    spread, stderr = _jackknife(fields)
    degenerate = spread == 0.0
    if degenerate:
        log.warning("Monte Carlo field spread is zero over %d samples",
                    n_samples)
    log.debug("MC Delta B_N = %.4e T +- %.2e over %d samples", spread, stderr,
              n_samples)
    return _stats('random-spins', 'monte-carlo', spread, g_e, db,
                  n_samples=n_samples, stderr=stderr, degenerate=degenerate,
                  field=fields.mean(axis=0))


def _cation_spins(db, dot_material, buffer_material):
    i_dot = db.species_for(db.cation_of(dot_material)).spin
    i_buf = db.species_for(db.cation_of(buffer_material)).spin
    return i_dot, i_buf


def delta_disorder(hmap, structure, db, g_e=DEFAULT_G_E, mode='alloy',
                   alloy_fraction=None):
    """Field spread of a polarized bath from random cation occupancy.

    Alloy mode applies x(1-x)(I_dot - I_buffer)^2 on every dot cation,
    interface mode 0.25 (I_dot - I_buffer)^2 on interface cations only.
    Anions never contribute.
    """
    _check_lengths(hmap, structure.site_count, "the structure")
    g = structure.geometry
    i_dot, i_buf = _cation_spins(db, g.dot_material, g.buffer_material)
    cations = structure.sublattice == geo.CATION
    if mode == 'alloy':
        x = structure.disorder.alloy_fraction if alloy_fraction is None \
            else alloy_fraction
        if not 0.0 <= x <= 1.0:
            raise BathException(
                "Alloy fraction must lie in [0, 1], got {}".format(x))
        variance = x * (1.0 - x) * (i_dot - i_buf) ** 2
        sites = cations & (structure.region == geo.DOT)
    elif mode == 'interface':
        variance = 0.25 * (i_dot - i_buf) ** 2
        sites = cations & (structure.region == geo.INTERFACE)
        if not sites.any():
            log.warning("No interface cations tagged; interface spread is "
                        "zero")
    else:
        raise BathException(
            "Disorder mode must be 'alloy' or 'interface', got {!r}"
            .format(mode))
    total = float(np.sum(hmap.coupling[sites] ** 2)) * variance
    delta_b = math.sqrt(total) / _field_scale(db, g_e)
    return _stats(mode, 'closed-form', delta_b, g_e, db,
                  direction='polarization')


def polarized_magnitude(hmap, structure, db, g_e=DEFAULT_G_E,
                        direction=(0.0, 0.0, 1.0)):
    config = polarized_config(structure, db, direction)
    return float(np.linalg.norm(effective_field(hmap, config, g_e, db)))


def delta_size(geometries, field_of: t.Callable, db, g_e=DEFAULT_G_E):
    """Population standard deviation of polarized |B_N| across geometries.

    `field_of(geometry)' returns the (HyperfineMap, structure) pair of one
    geometry.
    """
    if len(geometries) < 2:
        raise BathException("Size distribution needs at least 2 geometries")
    fields, labels = [], []
    for geometry in geometries:
        label = "{:g}x{:g}".format(geometry.base_diameter, geometry.height)
        try:
            hmap, structure = field_of(geometry)
        except QdHyperfineException as e:
            raise BathException("Geometry {}: {}".format(label, e))
        fields.append(polarized_magnitude(hmap, structure, db, g_e))
        labels.append(label)
        log.debug("Polarized |B_N| for %s: %.4f T", label, fields[-1])
    delta_b = float(np.std(fields))
    return _stats('size-distribution', 'multi-geometry', delta_b, g_e, db,
                  direction='polarization', fields=fields, labels=labels)


def overlap_and_density_fluctuation(wavefunctions):
    """Pairwise |<psi_a|psi_b>| and the relative site-averaged density shift.

    The fluctuation is mean_j |rho_a,j - rho_b,j| / mean_j rho_j averaged
    over pairs; `rms' is the root mean square per-site shift, also relative
    to the mean density.
    """
    if len(wavefunctions) < 2:
        raise BathException("Need at least 2 wavefunctions")
    shape = wavefunctions[0].amplitudes.shape
    for wf in wavefunctions[1:]:
        if wf.amplitudes.shape != shape:
            raise BathException(
                "Wavefunctions live on different grids: {} vs {}"
                .format(shape, wf.amplitudes.shape))
    densities = [wf.site_weights() for wf in wavefunctions]
    mean_density = float(np.mean(densities))
    overlaps, shifts, rms = [], [], []
    n = len(wavefunctions)
    for a in range(n):
        for b in range(a + 1, n):
            ov = abs(float(np.dot(wavefunctions[a].vector(),
                                  wavefunctions[b].vector())))
            overlaps.append((a, b, ov))
            diff = densities[a] - densities[b]
            shifts.append(float(np.mean(np.abs(diff))) / mean_density)
            rms.append(math.sqrt(float(np.mean(diff ** 2))) / mean_density)
    return overlaps, {"mean": float(np.mean(shifts)),
                      "rms": float(np.mean(rms))}


TABLE_HEADER = ('source', 'delta_b_g', 'delta_e_ev', 't2_star_s', 'method',
                'stderr_g')


def table_rows(stats: t.List[FieldStatistics]):
    rows = []
    for s in stats:
        rows.append({
            "source": s.source,
            "delta_b_g": s.delta_b_gauss,
            "delta_e_ev": s.delta_e,
            "t2_star_s": s.t2_star,
            "method": s.method if s.n_samples is None
            else "{}({})".format(s.method, s.n_samples),
            "stderr_g": None if s.stderr is None
            else tesla_to_gauss(s.stderr),
        })
    return rows


def format_table(stats):
    lines = ["{:<18} {:>12} {:>12} {:>12}  {}".format(
        'Source', 'dB_N (G)', 'dE (eV)', 'T2* (s)', 'method')]
    for row in table_rows(stats):
        err = '' if row["stderr_g"] is None \
            else ' +- {:.2g} G'.format(row["stderr_g"])
        lines.append("{:<18} {:>12.4g} {:>12.4g} {:>12.4g}  {}{}".format(
            row["source"], row["delta_b_g"], row["delta_e_ev"],
            row["t2_star_s"], row["method"], err))
    return '\n'.join(lines)


def write_table(stats, path):
    with open(str(path), 'w') as fout:
        fout.write('# ' + ' '.join(TABLE_HEADER) + '\n')
        for row in table_rows(stats):
            fout.write(' '.join(
                '-' if row[k] is None else
                (repr(float(row[k])) if isinstance(row[k], float)
                 else str(row[k]))
                for k in TABLE_HEADER) + '\n')
    return path
