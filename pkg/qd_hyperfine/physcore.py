"""Physical constants, the species/material database and the calibration of
s and s* orbital densities at nuclear sites.

Everything is Gaussian-CGS internally: densities in cm^-3, fields in Gauss,
energies in erg. Electron-volts and Tesla appear only at the boundary.
"""
import json
import math
import pathlib
import typing as t

import attr

from .utils import QdHyperfineException, index_by
from .utils import logger as log

SCHEMA_VERSION = 1
DEFAULT_DATABASE = pathlib.Path(__file__).parent / 'data' / 'database.json'

# 1 N/m expressed in eV/nm^2
N_PER_M_IN_EV_PER_NM2 = 6.241509074

# electron/proton mass ratio, to the four figures checked on load
MAGNETON_RATIO = 5.446e-4


class DatabaseException(QdHyperfineException):
    pass


class CalibrationException(QdHyperfineException):
    pass


def _positive(instance, attribute, value):
    if not value > 0:
        raise DatabaseException("{} must be strictly positive, got {}"
                                .format(attribute.name, value))


@attr.s(frozen=True)
class PhysicalConstants:
    """Magnetons in erg/G, reduced Planck constant in erg*s.
    """
    bohr_magneton = attr.ib(validator=_positive)
    nuclear_magneton = attr.ib(validator=_positive)
    reduced_planck = attr.ib(validator=_positive)
    erg_per_ev = attr.ib(default=1.602176634e-12, validator=_positive)

    def __attrs_post_init__(self):
        ratio = self.nuclear_magneton / self.bohr_magneton
        if abs(ratio - MAGNETON_RATIO) > 0.0005e-4:
            raise DatabaseException(
                "nuclear/bohr magneton ratio {:.4e} is not the electron/proton "
                "mass ratio".format(ratio))

    @property
    def bohr_magneton_ev_per_tesla(self):
        return self.bohr_magneton * 1e4 / self.erg_per_ev

    @property
    def reduced_planck_ev_s(self):
        return self.reduced_planck / self.erg_per_ev

    def ev_to_erg(self, value):
        return value * self.erg_per_ev

    def erg_to_ev(self, value):
        return value / self.erg_per_ev


def gauss_to_tesla(value):
    return value * 1e-4


def tesla_to_gauss(value):
    return value * 1e4


@attr.s(frozen=True)
class Isotope:
    mass_number = attr.ib()
    abundance = attr.ib()
    spin = attr.ib()
    g_factor = attr.ib()


@attr.s(frozen=True)
class OrbitalDensity:
    """|phi_s(0)|^2 and |phi_s*(0)|^2 of one atom in one host, cm^-3.
    """
    s = attr.ib()
    s_star = attr.ib()


@attr.s(frozen=True)
class NuclearSpecies:
    name = attr.ib()
    isotopes = attr.ib(converter=tuple)
    orbital_ratio = attr.ib()
    # host binary name -> OrbitalDensity
    orbital_densities = attr.ib(factory=dict)

    @property
    def dominant(self) -> Isotope:
        return self.isotopes[0]

    @property
    def spin(self):
        return self.dominant.spin

    @property
    def g_factor(self):
        return self.dominant.g_factor

    def densities(self, host=None) -> OrbitalDensity:
        if not self.orbital_densities:
            raise CalibrationException(
                "Species {} has no calibrated orbital densities"
                .format(self.name))
        if host is None:
            if len(self.orbital_densities) != 1:
                raise CalibrationException(
                    "Species {} is calibrated for several hosts {}, "
                    "name one".format(self.name,
                                      sorted(self.orbital_densities)))
            return next(iter(self.orbital_densities.values()))
        if host not in self.orbital_densities:
            raise CalibrationException(
                "Species {} is not calibrated in host {}"
                .format(self.name, host))
        return self.orbital_densities[host]

    def phis(self, host=None):
        """Signed phi_s(0), phi_s*(0); phi_s is taken positive.
        """
        dens = self.densities(host)
        phi_s = math.sqrt(dens.s)
        return phi_s, self.orbital_ratio * phi_s


@attr.s(frozen=True)
class BulkCalibrationInput:
    """One (atom, host) row of the calibration data.
    """
    atom = attr.ib()
    host = attr.ib()
    sublattice = attr.ib()
    atomic_ratio = attr.ib()
    alpha = attr.ib()
    beta = attr.ib()
    # |psi(0)|^2 in cm^-3, deduced from the reference when not given
    density = attr.ib(default=None)

    def __attrs_post_init__(self):
        norm = self.alpha ** 2 + self.beta ** 2
        if norm > 1.1:
            raise CalibrationException(
                "alpha^2 + beta^2 = {:.3f} for {} in {} exceeds 1"
                .format(norm, self.atom, self.host))
        if norm > 1.0 + 1e-3:
            log.debug("alpha^2 + beta^2 = %.4f for %s in %s (rounded "
                      "published coefficients)", norm, self.atom, self.host)
        if self.density is not None and not self.density > 0:
            raise CalibrationException(
                "Bulk density for {} in {} must be positive"
                .format(self.atom, self.host))


@attr.s(frozen=True)
class MaterialRecord:
    name = attr.ib()
    cation = attr.ib()
    anion = attr.ib()
    lattice_constant = attr.ib(validator=_positive)
    # Keating constants in eV/nm^2
    vff_alpha = attr.ib(validator=_positive)
    vff_beta = attr.ib(validator=_positive)
    tb_parameter_set = attr.ib(default='')
    electron_g = attr.ib(default=2.0)

    def __attrs_post_init__(self):
        if self.electron_g == 0:
            raise DatabaseException(
                "Material {} has a zero electron g factor".format(self.name))

    @property
    def bond_length(self):
        return math.sqrt(3.0) * self.lattice_constant / 4.0


@attr.s(frozen=True)
class Database:
    constants = attr.ib()
    species = attr.ib(converter=tuple)
    materials = attr.ib(converter=tuple)
    calibration = attr.ib(converter=tuple, factory=tuple)
    reference = attr.ib(factory=dict)
    schema_version = attr.ib(default=SCHEMA_VERSION)

    def species_for(self, element) -> NuclearSpecies:
        indexed = index_by(self.species, 'name')
        if element not in indexed:
            raise DatabaseException("Unknown species: {}".format(element))
        return indexed[element]

    def material(self, name) -> MaterialRecord:
        indexed = index_by(self.materials, 'name')
        if name not in indexed:
            raise DatabaseException("Unknown material: {}".format(name))
        return indexed[name]

    def cation_of(self, material):
        return self.material(material).cation

    def anion_of(self, material):
        return self.material(material).anion

    def binary_of_cation(self, element) -> MaterialRecord:
        for material in self.materials:
            if material.cation == element:
                return material
        raise DatabaseException(
            "No binary material with cation {}".format(element))


def calibrate_orbital_densities(calibration_input: BulkCalibrationInput,
                                ratio: float) -> t.Tuple[float, float]:
    """Invert |psi(0)|^2 = |alpha phi_s(0) + beta phi_s*(0)|^2 under the
    constraint phi_s*(0) = ratio * phi_s(0).
    """
    density = calibration_input.density
    if density is None:
        raise CalibrationException(
            "No bulk density for {} in {}".format(calibration_input.atom,
                                                  calibration_input.host))
    weight = calibration_input.alpha + calibration_input.beta * ratio
    if weight == 0:
        raise CalibrationException(
            "Singular calibration for {} in {}: alpha + beta*r = 0"
            .format(calibration_input.atom, calibration_input.host))
    dens_s = density / weight ** 2
    return dens_s, ratio ** 2 * dens_s


def deduce_bulk_densities(reference: t.Dict[str, float],
                          atomic_ratios: t.Iterable[BulkCalibrationInput]):
    """Scale the measured reference densities by the atomic density ratios.

    `reference' maps 'cation'/'anion' to the reference host densities.
    Returns {(atom, host): density}.
    """
    for key in ('cation', 'anion'):
        if not reference.get(key, 0) > 0:
            raise CalibrationException(
                "Reference {} density must be positive".format(key))
    deduced = {}
    for entry in atomic_ratios:
        if not entry.atomic_ratio > 0:
            raise CalibrationException(
                "Atomic density ratio for {} in {} must be positive, got {}"
                .format(entry.atom, entry.host, entry.atomic_ratio))
        deduced[(entry.atom, entry.host)] = (
            reference[entry.sublattice] * entry.atomic_ratio)
    return deduced


def calibration_table(db: Database):
    """Rows of the calibration chain, one per (atom, host) entry.
    """
    deduced = deduce_bulk_densities(db.reference, db.calibration)
    rows = []
    for entry in db.calibration:
        species = db.species_for(entry.atom)
        density = entry.density or deduced[(entry.atom, entry.host)]
        filled = attr.evolve(entry, density=density)
        dens_s, dens_s_star = calibrate_orbital_densities(
            filled, species.orbital_ratio)
        rows.append({
            "atom": entry.atom,
            "host": entry.host,
            "alpha": entry.alpha,
            "beta": entry.beta,
            "ratio": species.orbital_ratio,
            "bulk_density": density,
            "phi_s_density": dens_s,
            "phi_s_star_density": dens_s_star,
        })
    return rows


def _calibrate(species, calibration, reference):
    """Fill per-host orbital densities of every species lacking them.
    """
    if not calibration:
        return species
    rows = {}
    deduced = deduce_bulk_densities(reference, calibration)
    indexed = index_by(species, 'name')
    for entry in calibration:
        if entry.atom not in indexed:
            raise DatabaseException(
                "Calibration entry names unknown species {}"
                .format(entry.atom))
        density = entry.density or deduced[(entry.atom, entry.host)]
        dens = calibrate_orbital_densities(
            attr.evolve(entry, density=density),
            indexed[entry.atom].orbital_ratio)
        rows.setdefault(entry.atom, {})[entry.host] = OrbitalDensity(*dens)
    calibrated = []
    for sp in species:
        densities = dict(rows.get(sp.name, {}))
        densities.update(sp.orbital_densities)
        calibrated.append(attr.evolve(sp, orbital_densities=densities))
    return calibrated


def calibrate_database(db: Database) -> Database:
    """Fill missing per-host orbital densities from the calibration section.
    """
    species = _calibrate(db.species, db.calibration, db.reference)
    return attr.evolve(db, species=species)


def _check_densities(sp: NuclearSpecies):
    for host, dens in sp.orbital_densities.items():
        if dens.s < 0 or dens.s_star < 0:
            raise DatabaseException(
                "Species {} has a negative orbital density in host {}"
                .format(sp.name, host))
        expected = sp.orbital_ratio ** 2 * dens.s
        if abs(expected - dens.s_star) > 1e-6 * max(expected, dens.s_star):
            raise DatabaseException(
                "Species {} in host {}: |phi_s*|^2 differs from r^2 |phi_s|^2"
                .format(sp.name, host))


def _parse_species(raw):
    try:
        name = raw['name']
        isotopes = [Isotope(iso['mass_number'], iso['abundance'],
                            iso['spin'], iso['g_factor'])
                    for iso in raw['isotopes']]
        ratio = raw['orbital_ratio']
    except (KeyError, TypeError) as e:
        raise DatabaseException("Species entry {!r} misses key {}"
                                .format(raw.get('name', '?'), e))
    if not isotopes:
        raise DatabaseException("Species {} has no isotopes".format(name))
    for iso in isotopes:
        if iso.spin < 0 or (2 * iso.spin) != int(2 * iso.spin):
            raise DatabaseException(
                "Species {}: nuclear spin {} is not a non-negative "
                "half-integer".format(name, iso.spin))
    densities = {}
    for host, dens in raw.get('orbital_densities', {}).items():
        densities[host] = OrbitalDensity(dens['s'], dens['s_star'])
        if dens['s'] < 0 or dens['s_star'] < 0:
            raise DatabaseException(
                "Species {} has a negative orbital density in host {}"
                .format(name, host))
    isotopes.sort(key=lambda iso: -iso.abundance)
    return NuclearSpecies(name, isotopes, ratio, densities)


def parse_database(raw) -> Database:
    if not isinstance(raw, dict):
        raise DatabaseException("Database root must be an object")
    version = raw.get('schema_version')
    if version != SCHEMA_VERSION:
        raise DatabaseException(
            "Unsupported database schema_version: {}".format(version))
    for key in ('constants', 'species', 'materials'):
        if key not in raw:
            raise DatabaseException("Database misses section {}".format(key))
    const = raw['constants']
    try:
        constants = PhysicalConstants(
            const['bohr_magneton'], const['nuclear_magneton'],
            const['reduced_planck'], const.get('erg_per_ev', 1.602176634e-12))
    except KeyError as e:
        raise DatabaseException("Constants miss key {}".format(e))

    species = [_parse_species(sp) for sp in raw['species']]
    vff_scale = (N_PER_M_IN_EV_PER_NM2
                 if raw.get('vff_units', 'N/m') == 'N/m' else 1.0)
    materials = []
    for mat in raw['materials']:
        try:
            materials.append(MaterialRecord(
                name=mat['name'], cation=mat['cation'], anion=mat['anion'],
                lattice_constant=mat['lattice_constant'],
                vff_alpha=mat['vff_alpha'] * vff_scale,
                vff_beta=mat['vff_beta'] * vff_scale,
                tb_parameter_set=mat.get('tb_parameter_set', ''),
                electron_g=mat.get('electron_g', 2.0)))
        except KeyError as e:
            raise DatabaseException("Material {!r} misses key {}"
                                    .format(mat.get('name', '?'), e))

    names = {sp.name for sp in species}
    for mat in materials:
        for element in (mat.cation, mat.anion):
            if element not in names:
                raise DatabaseException(
                    "Material {} references unknown species {}"
                    .format(mat.name, element))

    calib = raw.get('calibration', {})
    reference = {}
    entries = []
    if calib:
        ref = calib.get('reference', {})
        reference = {'host': ref.get('host'),
                     'cation': ref.get('cation_density'),
                     'anion': ref.get('anion_density')}
        for entry in calib.get('entries', []):
            try:
                entries.append(BulkCalibrationInput(
                    atom=entry['atom'], host=entry['host'],
                    sublattice=entry['sublattice'],
                    atomic_ratio=entry['atomic_ratio'],
                    alpha=entry['alpha'], beta=entry['beta'],
                    density=entry.get('density')))
            except KeyError as e:
                raise DatabaseException("Calibration entry misses key {}"
                                        .format(e))
            except CalibrationException as e:
                raise DatabaseException(str(e))
        try:
            species = _calibrate(species, entries, reference)
        except CalibrationException as e:
            raise DatabaseException(str(e))

    for sp in species:
        _check_densities(sp)

    return Database(constants, species, materials, entries, reference, version)


def load_database(path=None) -> Database:
    """Load, validate and calibrate the species/material database.
    """
    path = pathlib.Path(path) if path else DEFAULT_DATABASE
    try:
        with open(str(path)) as fin:
            text = fin.read()
    except FileNotFoundError:
        raise DatabaseException("Database file not found: {}".format(path))
    if not text.strip():
        raise DatabaseException("Database file {} is empty: schema error"
                                .format(path))
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise DatabaseException("Database file {} does not parse: {}"
                                .format(path, e))
    db = parse_database(raw)
    log.debug("Loaded database %s: %d species, %d materials",
              path, len(db.species), len(db.materials))
    return db
