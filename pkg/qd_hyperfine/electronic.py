"""Sparse empirical tight-binding Hamiltonian of an atomistic structure.

Layout is site-major: row site * n_orb + orbital, with the orbital order of
the basis tier (see slater_koster.TIERS). Spin is not included.
"""
import json
import math
import pathlib

import attr
import numpy as np
import scipy.linalg
import scipy.sparse as sparse

from . import geometry as geo
from . import slater_koster as sk
from .physcore import DatabaseException, load_database
from .slater_koster import HamiltonianException
from .utils import logger as log

SCHEMA_VERSION = 1
DEFAULT_PARAMETERS = pathlib.Path(__file__).parent / 'data' / 'tb_params.json'

VALENCE_BANDS = {'s': 0, 'sp3s*': 4, 'sp3d5s*': 4}

SIGMA_MODES = ('midgap', 'conduction')

# Gamma-point bulk form (four nearest neighbours summed) -> two-centre form
_QUARTER_SQRT3 = math.sqrt(3.0) / 4.0


def two_centre_from_bulk(bulk):
    """Convert Gamma-point sp3s* parameters to two-centre integrals.
    """
    try:
        return {
            's,s,sigma': bulk['V_ss'] / 4.0,
            'p,p,sigma': (bulk['V_xx'] + 2 * bulk['V_xy']) / 4.0,
            'p,p,pi': (bulk['V_xx'] - bulk['V_xy']) / 4.0,
            's,p,sigma': bulk['V_sa_pc'] * _QUARTER_SQRT3,
            'p,s,sigma': bulk['V_sc_pa'] * _QUARTER_SQRT3,
            'S,p,sigma': bulk['V_Sa_pc'] * _QUARTER_SQRT3,
            'p,S,sigma': bulk['V_pa_Sc'] * _QUARTER_SQRT3,
            's,S,sigma': bulk.get('V_sa_Sc', 0.0) / 4.0,
            'S,s,sigma': bulk.get('V_Sa_sc', 0.0) / 4.0,
            'S,S,sigma': bulk.get('V_SS', 0.0) / 4.0,
        }
    except KeyError as e:
        raise HamiltonianException("Bulk parameters miss {}".format(e))


@attr.s(frozen=True)
class MaterialTb:
    name = attr.ib()
    # orbital type (s, p, d, S) -> on-site energy, eV
    onsite_anion = attr.ib()
    onsite_cation = attr.ib()
    # "anion-type,cation-type,bond" -> two-centre integral, eV
    integrals = attr.ib()
    valence_band_offset = attr.ib(default=0.0)
    valence_band_edge = attr.ib(default=0.0)


@attr.s(frozen=True)
class TbParameterSet:
    name = attr.ib()
    tier = attr.ib()
    materials = attr.ib()
    eta = attr.ib(default=2.0)
    eta_overrides = attr.ib(factory=dict)
    # orbital type -> on-site shift per unit mean bond strain, eV
    lowdin = attr.ib(factory=dict)
    passivation_energy = attr.ib(default=0.0)
    source = attr.ib(default='')

    @property
    def orbitals(self):
        return sk.tier_orbitals(self.tier)

    @property
    def valence_bands(self):
        return VALENCE_BANDS[self.tier]

    def material(self, name) -> MaterialTb:
        if name not in self.materials:
            raise HamiltonianException(
                "Parameter set {} ({}) has no entry for {}"
                .format(self.name, self.tier, name))
        return self.materials[name]

    def eta_for(self, key):
        return self.eta_overrides.get(key, self.eta)


def _parse_material(name, raw, tier):
    orbital_types = sorted({sk.ORBITAL_TYPE[o]
                            for o in sk.tier_orbitals(tier)})
    try:
        onsite = raw['onsite']
        anion, cation = dict(onsite['anion']), dict(onsite['cation'])
    except (KeyError, TypeError):
        raise HamiltonianException(
            "Material {}: missing onsite.anion / onsite.cation".format(name))
    for side, table in (('anion', anion), ('cation', cation)):
        for orb_type in orbital_types:
            if orb_type not in table:
                raise HamiltonianException(
                    "Material {}: missing {} on-site energy {!r}"
                    .format(name, side, orb_type))
    if 'integrals' in raw:
        integrals = dict(raw['integrals'])
    elif 'bulk_integrals' in raw:
        integrals = two_centre_from_bulk(raw['bulk_integrals'])
    else:
        raise HamiltonianException(
            "Material {}: no integrals given".format(name))
    for key in sk.required_integrals(tier):
        if key not in integrals:
            raise HamiltonianException(
                "Material {}: missing two-centre integral {}"
                .format(name, key))
    return MaterialTb(name, anion, cation, integrals,
                      raw.get('valence_band_offset', 0.0),
                      raw.get('valence_band_edge', 0.0))


def parse_parameters(raw, tier, source='') -> TbParameterSet:
    if not isinstance(raw, dict):
        raise HamiltonianException("Parameter file root must be an object")
    if raw.get('schema_version') != SCHEMA_VERSION:
        raise HamiltonianException(
            "Unsupported parameter schema_version: {}"
            .format(raw.get('schema_version')))
    sk.tier_orbitals(tier)
    tiers = raw.get('tiers', {})
    if tier not in tiers:
        raise HamiltonianException(
            "Parameter set {} has no {} tier".format(raw.get('name'), tier))
    entry = tiers[tier]
    eta = entry.get('eta', 2.0)
    if not eta > 0:
        raise HamiltonianException("Harrison exponent must be > 0")
    materials = {name: _parse_material(name, mat, tier)
                 for name, mat in sorted(entry.get('materials', {}).items())}
    return TbParameterSet(
        name=raw.get('name', ''), tier=tier, materials=materials, eta=eta,
        eta_overrides=dict(entry.get('eta_overrides', {})),
        lowdin=dict(entry.get('lowdin', {})),
        passivation_energy=entry.get('passivation_energy', 0.0),
        source=str(source))


def load_parameters(path=None, tier='sp3s*') -> TbParameterSet:
    path = pathlib.Path(path) if path else DEFAULT_PARAMETERS
    try:
        with open(str(path)) as fin:
            raw = json.load(fin)
    except FileNotFoundError:
        raise HamiltonianException("Parameter file not found: {}"
                                   .format(path))
    except json.JSONDecodeError as e:
        raise HamiltonianException("Parameter file {} does not parse: {}"
                                   .format(path, e))
    return parse_parameters(raw, tier, source=path)


@attr.s
class SparseHamiltonian:
    matrix = attr.ib(repr=False)
    orbitals = attr.ib()
    tier = attr.ib()
    n_sites = attr.ib()
    bond_count = attr.ib(default=0)
    layout = attr.ib(default='site-major')

    @property
    def dimension(self):
        return self.matrix.shape[0]

    @property
    def n_orbitals(self):
        return len(self.orbitals)

    def hermiticity_error(self):
        diff = self.matrix - self.matrix.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def shifted(self, energy):
        """Copy with every on-site energy raised by `energy'.
        """
        eye = sparse.identity(self.dimension, format='csr')
        return attr.evolve(self, matrix=(self.matrix + energy * eye).tocsr())


def _binary_names(db, elements):
    names = {}
    for el in sorted(set(elements.tolist())):
        try:
            names[el] = db.binary_of_cation(el).name
        except DatabaseException:
            raise HamiltonianException(
                "No binary material, hence no parameters, for cation {}"
                .format(el))
    return names


def _onsite_energies(structure, params, db):
    """(N, n_orb) diagonal on-site energies including band offsets.
    """
    orbitals = params.orbitals
    types = [sk.ORBITAL_TYPE[o] for o in orbitals]
    elements = structure.elements
    cations = structure.cations
    binaries = sorted(set(_binary_names(db, elements[cations]).values())) \
        if len(cations) else [structure.geometry.buffer_material]
    code_of = {name: i for i, name in enumerate(binaries)}
    cat_table = np.zeros((len(binaries), len(orbitals)))
    an_table = np.zeros((len(binaries), len(orbitals)))
    anion_of = {}
    for i, name in enumerate(binaries):
        mat = params.material(name)
        cat_table[i] = [mat.onsite_cation[t] + mat.valence_band_offset
                        for t in types]
        an_table[i] = [mat.onsite_anion[t] + mat.valence_band_offset
                       for t in types]
        anion_of[name] = db.material(name).anion

    n = structure.site_count
    code = np.full(n, -1, dtype=np.int64)
    cat_binary = _binary_names(db, elements[cations])
    for el, name in cat_binary.items():
        code[cations[elements[cations] == el]] = code_of[name]

    onsite = np.zeros((n, len(orbitals)))
    onsite[cations] = cat_table[code[cations]]

    anions = structure.anions
    total = np.zeros((len(anions), len(orbitals)))
    count = np.zeros(len(anions))
    for slot in range(4):
        nb = structure.neighbors[anions, slot]
        ok = nb >= 0
        total[ok] += an_table[code[nb[ok]]]
        count[ok] += 1
    lonely = count == 0
    if lonely.any():
        fallback = structure.geometry.buffer_material
        if fallback not in code_of:
            raise HamiltonianException(
                "Isolated anions and no parameters for {}".format(fallback))
        total[lonely] = an_table[code_of[fallback]]
        count[lonely] = 1
    onsite[anions] = total / count[:, None]

    for el in sorted(set(elements[anions].tolist())):
        for name in _anion_hosts(structure, db, el):
            if anion_of[name] != el:
                raise HamiltonianException(
                    "Anion {} is bonded to a {} cation; no parameters for "
                    "that pair".format(el, name))
    return onsite


def _anion_hosts(structure, db, element):
    """Binaries of the cations bonded to anions of `element'.
    """
    anions = structure.anions[structure.elements[structure.anions]
                              == element]
    nb = structure.neighbors[anions].ravel()
    nb = nb[nb >= 0]
    cats = sorted(set(structure.elements[nb].tolist()))
    return {db.binary_of_cation(el).name for el in cats}


def _bond_parameters(structure, params, db, anion, cation, lengths,
                     strain_corrections):
    """Per-bond integral arrays, taken from the binary of the bond's cation.
    """
    cat_el = structure.elements[cation]
    names = _binary_names(db, cat_el)
    keys = sk.required_integrals(params.tier)
    integrals = {key: np.zeros(len(cation)) for key in keys}
    for el, name in names.items():
        mask = cat_el == el
        mat = params.material(name)
        d0 = db.material(name).bond_length
        for key in keys:
            value = mat.integrals[key]
            if strain_corrections:
                value = sk.strain_scale(value, d0, lengths[mask],
                                        params.eta_for(key))
            integrals[key][mask] = value
    return integrals


def _mean_bond_strain(structure, db, anion, cation, lengths):
    d0 = np.array([db.binary_of_cation(el).bond_length
                   for el in structure.elements[cation]])
    strain = (lengths - d0) / d0
    total = np.zeros(structure.site_count)
    count = np.zeros(structure.site_count)
    np.add.at(total, anion, strain)
    np.add.at(total, cation, strain)
    np.add.at(count, anion, 1)
    np.add.at(count, cation, 1)
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


def _passivation_blocks(structure, params):
    """(sites, blocks) raising sp3 hybrids that point along missing bonds.
    """
    orbitals = params.orbitals
    if params.passivation_energy == 0 or 'px' not in orbitals:
        return np.zeros(0, dtype=np.int64), np.zeros((0, len(orbitals),
                                                      len(orbitals)))
    idx = [orbitals.index(o) for o in ('s', 'px', 'py', 'pz')]
    missing = structure.neighbors < 0
    sites, slots = np.nonzero(missing)
    sign = np.where(structure.sublattice[sites] == geo.CATION, 1.0, -1.0)
    u = sign[:, None] * geo.BOND_OFFSETS[slots] / math.sqrt(3.0)
    h = np.zeros((len(sites), len(orbitals)))
    h[:, idx[0]] = 0.5
    h[:, idx[1:]] = 0.5 * math.sqrt(3.0) * u
    blocks = params.passivation_energy * np.einsum('bi,bj->bij', h, h)
    return sites, blocks


def assemble(structure, params: TbParameterSet, db=None,
             strain_corrections=True) -> SparseHamiltonian:
    """Tight-binding Hamiltonian H = D + T + T^T.

    D holds on-site energies (plus Lowdin shifts and boundary passivation),
    T the anion->cation bond blocks.
    """
    db = db or load_database()
    orbitals = params.orbitals
    norb = len(orbitals)
    n = structure.site_count
    dim = n * norb

    onsite = _onsite_energies(structure, params, db)
    anion, cation, _ = geo.bond_pairs(structure)
    vec = geo.bond_vectors(structure, anion, cation)
    lengths = np.linalg.norm(vec, axis=1)
    if np.any(lengths <= 0):
        raise HamiltonianException("Zero-length bond in structure")
    cosines = vec / lengths[:, None]

    if strain_corrections and params.lowdin:
        strain = _mean_bond_strain(structure, db, anion, cation, lengths)
        for j, orb in enumerate(orbitals):
            coef = params.lowdin.get(sk.ORBITAL_TYPE[orb], 0.0)
            onsite[:, j] += coef * strain

    # site blocks are summed densely, in slot order, so that (i, j) and
    # (j, i) accumulate identical terms
    orb = np.arange(norb)
    local = np.zeros((n, norb, norb))
    local[:, orb, orb] = onsite
    sites, pblocks = _passivation_blocks(structure, params)
    np.add.at(local, sites, pblocks)
    keep = local != 0
    keep[:, orb, orb] = True
    site, oi, oj = np.nonzero(keep)
    diag = sparse.coo_matrix(
        (local[site, oi, oj], (site * norb + oi, site * norb + oj)),
        shape=(dim, dim)).tocsr()

    integrals = _bond_parameters(structure, params, db, anion, cation,
                                 lengths, strain_corrections)
    blocks = sk.sk_blocks(cosines, integrals, params.tier)
    oi, oj = np.meshgrid(np.arange(norb), np.arange(norb), indexing='ij')
    t_rows = (anion[:, None, None] * norb + oi).ravel()
    t_cols = (cation[:, None, None] * norb + oj).ravel()
    hop = sparse.coo_matrix((blocks.ravel(), (t_rows, t_cols)),
                            shape=(dim, dim)).tocsr()
    matrix = (diag + hop + hop.T).tocsr()
    matrix.sort_indices()
    log.debug("Assembled %s Hamiltonian: %d sites, %d bonds, nnz=%d",
              params.tier, n, len(anion), matrix.nnz)
    return SparseHamiltonian(matrix, orbitals, params.tier, n, len(anion))


def bulk_hamiltonian(material, params: TbParameterSet, db=None,
                     k=(0.0, 0.0, 0.0)):
    """Bloch Hamiltonian of the two-atom cell (anion, cation), k in 1/nm.
    """
    db = db or load_database()
    mat = params.material(material)
    a = db.material(material).lattice_constant
    types = [sk.ORBITAL_TYPE[o] for o in params.orbitals]
    offset = mat.valence_band_offset
    norb = len(types)
    # cation neighbours of an anion sit at -BOND_OFFSETS in grid units
    vectors = -geo.BOND_OFFSETS * (a / 4.0)
    cosines = -geo.BOND_OFFSETS / math.sqrt(3.0)
    blocks = sk.sk_blocks(cosines, mat.integrals, params.tier)
    phases = np.exp(1j * vectors.dot(np.asarray(k, dtype=float)))
    coupling = np.einsum('b,bij->ij', phases, blocks)
    h = np.zeros((2 * norb, 2 * norb), dtype=complex)
    h[:norb, :norb] = np.diag([mat.onsite_anion[t] + offset for t in types])
    h[norb:, norb:] = np.diag([mat.onsite_cation[t] + offset for t in types])
    h[:norb, norb:] = coupling
    h[norb:, :norb] = coupling.conj().T
    return h


def bulk_band_edges(material, params: TbParameterSet, db=None):
    """(valence band maximum, conduction band minimum) at Gamma, eV.
    """
    energies = scipy.linalg.eigvalsh(bulk_hamiltonian(material, params, db))
    nv = params.valence_bands
    mat = params.material(material)
    if nv == 0:
        vbm = mat.valence_band_edge + mat.valence_band_offset
    else:
        vbm = float(energies[nv - 1])
    return vbm, float(energies[nv])


def resolve_sigma(sigma, material, params: TbParameterSet, db=None):
    """Folded-spectrum reference energy from a mode name or a number.
    """
    if isinstance(sigma, (int, float)) and not isinstance(sigma, bool):
        return float(sigma)
    if sigma not in SIGMA_MODES:
        raise HamiltonianException(
            "Unknown sigma mode {!r}, expected a number or one of {}"
            .format(sigma, SIGMA_MODES))
    vbm, cbm = bulk_band_edges(material, params, db)
    if sigma == 'midgap':
        return 0.5 * (vbm + cbm)
    return cbm
