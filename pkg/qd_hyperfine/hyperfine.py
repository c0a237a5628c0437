"""Per-nucleus hyperfine coupling constants from the conduction state.

A_j = (16 pi / 3) mu_B mu_N g_j |psi(R_j)|^2 with
|psi(R_j)|^2 = |alpha_j phi_s(0) + beta_j phi_s*(0)|^2, evaluated in
Gaussian-CGS and reported in eV.
"""
import math
import pathlib

import attr
import numpy as np

from . import geometry as geo
from .physcore import CalibrationException
from .utils import QdHyperfineException
from .utils import logger as log

CONTACT_PREFACTOR = 16.0 * math.pi / 3.0
REACH_FRACTION = 0.01
AXES = ('x', 'z')


class HyperfineException(QdHyperfineException):
    pass


@attr.s
class HyperfineMap:
    # per site A_j, eV
    coupling = attr.ib(repr=False)
    # per site |psi(R_j)|^2, cm^-3
    density = attr.ib(repr=False)
    structure_id = attr.ib(default='')
    wavefunction_id = attr.ib(default='')

    @property
    def site_count(self):
        return len(self.coupling)

    @property
    def max_coupling(self):
        return float(np.max(self.coupling)) if self.site_count else 0.0

    @property
    def argmax(self):
        return int(np.argmax(self.coupling))

    def scaled(self, factor):
        return attr.evolve(self, coupling=self.coupling * factor,
                           density=self.density * factor)


@attr.s
class Profile:
    axis = attr.ib()
    coordinates = attr.ib(repr=False)
    values = attr.ib(repr=False)
    # where the axis crosses the lens surface, nm
    interfaces = attr.ib(factory=list)


def _host_phis(species, host, fallback):
    try:
        return species.phis(host)
    except CalibrationException:
        try:
            return species.phis(fallback)
        except CalibrationException:
            raise HyperfineException(
                "Species {} is not calibrated for host {}"
                .format(species.name, host))


def site_orbital_phis(structure, db):
    """Signed phi_s(0), phi_s*(0) per site, cm^-3/2.

    Cations use their own binary; anions average over the binaries of
    their cation neighbours.
    """
    n = structure.site_count
    phi = np.zeros((n, 2))
    elements = structure.elements
    fallback = structure.geometry.buffer_material
    host_of = {}
    for el in sorted(set(elements[structure.cations].tolist())):
        host_of[el] = db.binary_of_cation(el).name

    for el in sorted(set(elements.tolist())):
        species = db.species_for(el)
        mask = elements == el
        cat_mask = mask & (structure.sublattice == geo.CATION)
        if cat_mask.any():
            phi[cat_mask] = _host_phis(species, host_of[el], fallback)
        an_idx = np.flatnonzero(mask & (structure.sublattice == geo.ANION))
        if not len(an_idx):
            continue
        total = np.zeros((len(an_idx), 2))
        count = np.zeros(len(an_idx))
        for slot in range(4):
            nb = structure.neighbors[an_idx, slot]
            ok = nb >= 0
            for cat_el in sorted(set(elements[nb[ok]].tolist())):
                sel = ok.copy()
                sel[ok] = elements[nb[ok]] == cat_el
                total[sel] += _host_phis(species, host_of[cat_el], fallback)
                count[sel] += 1
        lonely = count == 0
        total[lonely] = _host_phis(species, fallback, fallback)
        count[lonely] = 1
        phi[an_idx] = total / count[:, None]
    return phi


def contact_density(wf, site, species, host=None):
    """|alpha phi_s(0) + beta phi_s*(0)|^2 at one site, cm^-3.
    """
    try:
        phi_s, phi_s_star = species.phis(host)
    except CalibrationException as e:
        raise HyperfineException(str(e))
    return float((wf.alpha[site] * phi_s + wf.beta[site] * phi_s_star) ** 2)


def contact_densities(wf, structure, db):
    if wf.n_sites != structure.site_count:
        raise HyperfineException(
            "Wavefunction has {} sites, structure {}"
            .format(wf.n_sites, structure.site_count))
    phi = site_orbital_phis(structure, db)
    return (wf.alpha * phi[:, 0] + wf.beta * phi[:, 1]) ** 2


def site_g_factors(structure, db):
    g = np.zeros(structure.site_count)
    for el in sorted(set(structure.elements.tolist())):
        species = db.species_for(el)
        mask = structure.elements == el
        factors = np.array([iso.g_factor for iso in species.isotopes])
        g[mask] = factors[structure.isotope[mask]]
    if np.any(g == 0):
        raise HyperfineException("Species with zero nuclear g factor present")
    return g


def coupling_map(wf, structure, db, structure_id='',
                 wavefunction_id='') -> HyperfineMap:
    """A_j for every site, eV.
    """
    norm = wf.norm
    if abs(norm - 1.0) > 1e-8:
        raise HyperfineException(
            "Wavefunction is not normalized: |psi|^2 = {}".format(norm))
    density = contact_densities(wf, structure, db)
    const = db.constants
    g = site_g_factors(structure, db)
    erg = (CONTACT_PREFACTOR * const.bohr_magneton * const.nuclear_magneton
           * g * density)
    coupling = np.abs(const.erg_to_ev(erg))
    hmap = HyperfineMap(coupling, density, structure_id, wavefunction_id)
    log.debug("Hyperfine map: max A = %.3f neV at site %d, reach %d",
              hmap.max_coupling * 1e9, hmap.argmax,
              reach_count(hmap, REACH_FRACTION))
    return hmap


def reach_count(hmap: HyperfineMap, fraction=REACH_FRACTION):
    """Number of nuclei with A_j > fraction * max A_j.
    """
    if not 0 < fraction < 1:
        raise HyperfineException(
            "Reach fraction must lie in (0, 1), got {}".format(fraction))
    if hmap.site_count == 0:
        raise HyperfineException("Empty hyperfine map")
    return int(np.count_nonzero(hmap.coupling > fraction * hmap.max_coupling))


def anion_cation_ratio(hmap: HyperfineMap, structure,
                       fraction=REACH_FRACTION):
    """Mean anion A_j over mean cation A_j among sites above fraction * max.
    """
    inside = hmap.coupling > fraction * hmap.max_coupling
    anions = inside & (structure.sublattice == geo.ANION)
    cations = inside & (structure.sublattice == geo.CATION)
    if not anions.any() or not cations.any():
        raise HyperfineException("No anion or cation above the threshold")
    return float(np.mean(hmap.coupling[anions])
                 / np.mean(hmap.coupling[cations]))


def summary(hmap: HyperfineMap, structure):
    i = hmap.argmax
    dot = structure.region == geo.DOT
    return {
        "max_coupling_ev": hmap.max_coupling,
        "max_coupling_nev": hmap.max_coupling * 1e9,
        "argmax_site": i,
        "argmax_element": str(structure.elements[i]),
        "argmax_sublattice": geo.SUBLATTICE_NAMES[structure.sublattice[i]],
        "argmax_position_nm": [float(v) for v in structure.positions[i]],
        "anion_cation_ratio": (anion_cation_ratio(hmap, structure)
                               if hmap.max_coupling > 0 else None),
        "reach_count": reach_count(hmap, REACH_FRACTION),
        "dot_sites": int(np.count_nonzero(dot)),
    }


def dot_center(geometry):
    return np.array([0.0, 0.0, geometry.height / 2.0])


def nearest_site(structure, point):
    return int(np.argmin(np.linalg.norm(structure.positions - point, axis=1)))


def _interfaces(geometry, axis, center):
    """Coordinates where the axis through `center' crosses the lens surface.
    """
    if geometry.is_empty:
        return []
    rs, zs = geometry.sphere_radius, geometry.sphere_center_z
    if axis == 'z':
        r2 = center[0] ** 2 + center[1] ** 2
        if r2 > rs ** 2 - zs ** 2:
            return []
        return [0.0, float(zs + math.sqrt(rs ** 2 - r2))]
    if center[2] < 0:
        return []
    chord2 = rs ** 2 - center[1] ** 2 - (center[2] - zs) ** 2
    if chord2 <= 0:
        return []
    half = math.sqrt(chord2)
    return [-half, half]


def profile(hmap: HyperfineMap, structure, axis='x', bin_width=None,
            center=None) -> Profile:
    """Lineout of A_j along an axis through the dot centre.

    The axis passes through the site nearest `center' (the lens centre by
    default) so that it runs along an atomic row; sites within half a bond
    length of it are kept. With `bin_width' the values are averaged per bin.
    """
    if axis not in AXES:
        raise HyperfineException(
            "Profile axis must be one of {}, got {!r}".format(AXES, axis))
    if hmap.site_count != structure.site_count:
        raise HyperfineException("Map and structure sizes differ")
    target = dot_center(structure.geometry) if center is None \
        else np.asarray(center, dtype=float)
    center = structure.positions[nearest_site(structure, target)]
    rel = structure.positions - center
    col = 0 if axis == 'x' else 2
    others = [d for d in range(3) if d != col]
    dist = np.linalg.norm(rel[:, others], axis=1)
    reach = math.sqrt(3.0) * structure.lattice_constant / 8.0
    sel = np.flatnonzero(dist <= reach + 1e-9)
    if not len(sel):
        raise HyperfineException(
            "No sites within {:.3f} nm of the {} axis".format(reach, axis))
    coords = structure.positions[sel, col]
    values = hmap.coupling[sel]
    order = np.argsort(coords, kind='stable')
    coords, values = coords[order], values[order]
    if bin_width:
        bins = np.floor(coords / bin_width).astype(np.int64)
        uniq, inverse = np.unique(bins, return_inverse=True)
        sums = np.bincount(inverse, weights=values)
        counts = np.bincount(inverse)
        coords = (uniq + 0.5) * bin_width
        values = sums / counts
    return Profile(axis, coords, values,
                   _interfaces(structure.geometry, axis, center))


def decay_length(prof: Profile, side='positive'):
    """1/e length of the lineout beyond the interface on one side, nm.
    """
    if not prof.interfaces:
        raise HyperfineException("Profile has no interface to decay from")
    if side == 'positive':
        mask = prof.coordinates > prof.interfaces[-1]
        dist = prof.coordinates[mask] - prof.interfaces[-1]
    else:
        mask = prof.coordinates < prof.interfaces[0]
        dist = prof.interfaces[0] - prof.coordinates[mask]
    values = prof.values[mask]
    ok = values > 0
    if np.count_nonzero(ok) < 2:
        raise HyperfineException(
            "Too few non-zero points outside the dot along {}"
            .format(prof.axis))
    slope, _ = np.polyfit(dist[ok], np.log(values[ok]), 1)
    if slope >= 0:
        return math.inf
    return -1.0 / slope


def outside_fraction(prof: Profile):
    """Share of the lineout's summed A_j lying outside the dot.
    """
    total = float(np.sum(prof.values))
    if total == 0 or not prof.interfaces:
        return 0.0
    lo, hi = prof.interfaces[0], prof.interfaces[-1]
    outside = (prof.coordinates < lo) | (prof.coordinates > hi)
    return float(np.sum(prof.values[outside]) / total)


MAP_COLUMNS = ('index', 'element', 'region', 'x_nm', 'y_nm', 'z_nm',
               'A_ev', 'density_cm3')


def write_map(hmap: HyperfineMap, structure, path):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(str(path), 'w') as fout:
        fout.write('# structure {} wavefunction {}\n'.format(
            hmap.structure_id or '-', hmap.wavefunction_id or '-'))
        fout.write('# ' + ' '.join(MAP_COLUMNS) + '\n')
        for i in range(hmap.site_count):
            x, y, z = structure.positions[i]
            fout.write('{} {} {} {!r} {!r} {!r} {!r} {!r}\n'.format(
                i, structure.elements[i],
                geo.REGION_NAMES[structure.region[i]],
                float(x), float(y), float(z),
                float(hmap.coupling[i]), float(hmap.density[i])))
    return path


def read_map(path) -> HyperfineMap:
    coupling, density = [], []
    ids = ['', '']
    with open(str(path)) as fin:
        for line in fin:
            if line.startswith('# structure'):
                parts = line.split()
                ids = [p if p != '-' else '' for p in (parts[2], parts[4])]
                continue
            if line.startswith('#') or not line.strip():
                continue
            cols = line.split()
            coupling.append(float(cols[6]))
            density.append(float(cols[7]))
    return HyperfineMap(np.array(coupling), np.array(density), ids[0],
                        ids[1])


def write_profile(prof: Profile, path):
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(str(path), 'w') as fout:
        fout.write('# axis {}\n'.format(prof.axis))
        fout.write('# interface_nm {}\n'.format(
            ' '.join(repr(float(v)) for v in prof.interfaces)))
        fout.write('# {}_nm A_ev\n'.format(prof.axis))
        for c, v in zip(prof.coordinates, prof.values):
            fout.write('{!r} {!r}\n'.format(float(c), float(v)))
    return path
