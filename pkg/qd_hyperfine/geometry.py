"""Atomistic zinc-blende structure of a lens-shaped dot in a buffer.

Sites live on an integer grid in units of a/4 (a = lattice constant of the
buffer): cations have all-even coordinates with a sum divisible by 4, anions
are cations shifted by (1, 1, 1).
"""
import json
import math
import pathlib
import typing as t

import attr
import numpy as np

from .physcore import load_database
from .utils import QdHyperfineException, hash_arrays
from .utils import logger as log

CATION, ANION = 0, 1
SUBLATTICE_NAMES = ('cation', 'anion')

DOT, INTERFACE, BUFFER = 0, 1, 2
REGION_NAMES = ('dot', 'interface', 'buffer')

# cation -> anion neighbour offsets in grid units
BOND_OFFSETS = np.array([
    (1, 1, 1),
    (1, -1, -1),
    (-1, 1, -1),
    (-1, -1, 1),
], dtype=np.int64)

FCC_BASIS = np.array([
    (0, 0, 0),
    (0, 2, 2),
    (2, 0, 2),
    (2, 2, 0),
], dtype=np.int64)

DISORDER_MODES = ('none', 'alloy', 'interface')


class GeometryException(QdHyperfineException):
    pass


@attr.s(frozen=True)
class DotGeometry:
    """Spherical-cap lens on the z = 0 plane, centred on the z axis. nm.
    """
    base_diameter = attr.ib()
    height = attr.ib()
    dot_material = attr.ib(default='InAs')
    buffer_material = attr.ib(default='GaAs')
    margin_lateral = attr.ib(default=12.0)
    margin_vertical = attr.ib(default=10.0)
    # explicit (Lx, Ly, Lz) buffer box; derived from the margins when None
    box = attr.ib(default=None, converter=attr.converters.optional(tuple))
    wetting_layer = attr.ib(default=False)

    def __attrs_post_init__(self):
        if self.height < 0 or self.base_diameter < 0:
            raise GeometryException("Dot dimensions must be non-negative")
        if self.height > self.base_diameter:
            raise GeometryException(
                "Dot height {} exceeds base diameter {}"
                .format(self.height, self.base_diameter))
        if self.margin_lateral < 0 or self.margin_vertical < 0:
            raise GeometryException("Buffer margins must be non-negative")

    @property
    def is_empty(self):
        return self.base_diameter <= 0 or self.height <= 0

    @property
    def base_radius(self):
        return self.base_diameter / 2.0

    @property
    def sphere_radius(self):
        if self.is_empty:
            return 0.0
        return (self.base_radius ** 2 + self.height ** 2) / (2 * self.height)

    @property
    def sphere_center_z(self):
        return self.height - self.sphere_radius

    def required_box(self):
        return (self.base_diameter + 2 * self.margin_lateral,
                self.base_diameter + 2 * self.margin_lateral,
                self.height + 2 * self.margin_vertical)

    def box_lengths(self):
        required = self.required_box()
        if self.box is None:
            return required
        for have, need, axis in zip(self.box, required, 'xyz'):
            if have < need:
                raise GeometryException(
                    "Buffer box {} nm along {} is too small for the lens plus "
                    "margin ({} nm)".format(have, axis, need))
        return tuple(self.box)


@attr.s(frozen=True)
class DisorderSpec:
    mode = attr.ib(default='none')
    alloy_fraction = attr.ib(default=0.0)
    interface_thickness = attr.ib(default=1.25)
    seed = attr.ib(default=None)
    isotope_sampling = attr.ib(default=False)

    def __attrs_post_init__(self):
        if self.mode not in DISORDER_MODES:
            raise GeometryException(
                "Unknown disorder mode {!r}, expected one of {}"
                .format(self.mode, DISORDER_MODES))
        if not 0.0 <= self.alloy_fraction <= 1.0:
            raise GeometryException(
                "Alloy fraction {} outside [0, 1]".format(self.alloy_fraction))
        if self.interface_thickness < 0:
            raise GeometryException("Interface thickness must be >= 0")


@attr.s
class AtomisticStructure:
    geometry = attr.ib()
    disorder = attr.ib()
    seed = attr.ib()
    lattice_constant = attr.ib()
    grid = attr.ib(eq=False, repr=False)
    positions = attr.ib(eq=False, repr=False)
    elements = attr.ib(eq=False, repr=False)
    sublattice = attr.ib(eq=False, repr=False)
    region = attr.ib(eq=False, repr=False)
    isotope = attr.ib(eq=False, repr=False)
    neighbors = attr.ib(eq=False, repr=False)
    origin = attr.ib(eq=False)
    extent = attr.ib(eq=False)
    periodic = attr.ib(eq=False, default=(False, False, False))

    @property
    def site_count(self):
        return len(self.elements)

    @property
    def box(self):
        return np.asarray(self.extent, dtype=float) * self.lattice_constant / 4

    @property
    def cations(self):
        return np.flatnonzero(self.sublattice == CATION)

    @property
    def anions(self):
        return np.flatnonzero(self.sublattice == ANION)

    def counts(self):
        counts = {"sites": int(self.site_count)}
        for code, name in enumerate(REGION_NAMES):
            counts[name] = int(np.count_nonzero(self.region == code))
        for element in sorted(set(self.elements.tolist())):
            counts[element] = int(np.count_nonzero(self.elements == element))
        return counts

    def with_positions(self, positions):
        return attr.evolve(self, positions=np.array(positions, dtype=float))

    def with_region(self, region):
        return attr.evolve(self, region=np.array(region, dtype=np.int8))

    def same_sites(self, other):
        return (self.site_count == other.site_count
                and np.array_equal(self.grid, other.grid)
                and np.array_equal(self.elements, other.elements)
                and np.array_equal(self.region, other.region)
                and np.array_equal(self.isotope, other.isotope)
                and np.array_equal(self.positions, other.positions))


def lens_signed_distance(geometry: DotGeometry, points):
    """Signed distance to the lens surface, negative inside, nm.

    The lens is the intersection of a sphere and the half space z >= 0, so
    the maximum of the two signed distances is exact inside and a lower
    bound near the rim outside.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if geometry.is_empty:
        return np.full(len(points), np.inf)
    center = np.array([0.0, 0.0, geometry.sphere_center_z])
    d_sphere = np.linalg.norm(points - center, axis=1) - geometry.sphere_radius
    d_plane = -points[:, 2]
    return np.maximum(d_sphere, d_plane)


def classify_point(geometry: DotGeometry, point, thickness=0.0):
    """Region of a point: interface when within `thickness' of the lens
    surface on either side, else dot inside, else buffer.
    """
    dist = float(lens_signed_distance(geometry, point)[0])
    if thickness > 0 and abs(dist) <= thickness:
        return 'interface'
    return 'dot' if dist <= 0 else 'buffer'


def classify_region(structure: AtomisticStructure, site, thickness=None):
    if thickness is None:
        thickness = (structure.disorder.interface_thickness
                     if structure.disorder.mode == 'interface' else 0.0)
    return classify_point(structure.geometry, structure.positions[site],
                          thickness)


def _region_codes(geometry, positions, grid, lattice_constant, thickness):
    dist = lens_signed_distance(geometry, positions)
    region = np.full(len(positions), BUFFER, dtype=np.int8)
    region[dist <= 0] = DOT
    if geometry.wetting_layer:
        # one monolayer: the cation plane at z = 0 and the anion plane above
        region[(grid[:, 2] >= 0) & (grid[:, 2] < 2)] = DOT
    if thickness > 0:
        region[np.abs(dist) <= thickness] = INTERFACE
    return region


def retag_interface(structure: AtomisticStructure, thickness):
    """Copy of `structure' with interface tags for a shell of `thickness'.
    """
    region = _region_codes(structure.geometry, structure.positions,
                           structure.grid, structure.lattice_constant,
                           thickness)
    return structure.with_region(region)


def _axis_points(start, stop, residue):
    first = start + ((residue - start) % 4)
    return np.arange(first, stop, 4, dtype=np.int64)


def _lattice_points(origin, extent):
    """All zinc-blende grid points inside [origin, origin + extent).
    """
    stop = origin + extent
    blocks = []
    for sublattice, shift in ((CATION, 0), (ANION, 1)):
        for basis in FCC_BASIS:
            axes = [_axis_points(origin[d], stop[d], (basis[d] + shift) % 4)
                    for d in range(3)]
            if any(len(ax) == 0 for ax in axes):
                continue
            gx, gy, gz = np.meshgrid(*axes, indexing='ij')
            pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
            blocks.append((pts, np.full(len(pts), sublattice, np.int8)))
    grid = np.concatenate([b[0] for b in blocks])
    sub = np.concatenate([b[1] for b in blocks])
    keys = _encode(grid, origin, extent)
    order = np.argsort(keys, kind='stable')
    return grid[order], sub[order]


def _encode(grid, origin, extent):
    rel = grid - origin
    return (rel[:, 2] * extent[1] + rel[:, 1]) * extent[0] + rel[:, 0]


def find_neighbors(grid, sublattice, origin, extent, periodic):
    """Nearest-neighbour table, -1 where the neighbour is outside the box.

    Slot s of a cation holds the anion at +BOND_OFFSETS[s]; slot s of an
    anion holds the cation at -BOND_OFFSETS[s].
    """
    origin = np.asarray(origin, dtype=np.int64)
    extent = np.asarray(extent, dtype=np.int64)
    periodic = np.asarray(periodic, dtype=bool)
    keys = _encode(grid, origin, extent)
    order = np.argsort(keys, kind='stable')
    sorted_keys = keys[order]
    sign = np.where(sublattice == CATION, 1, -1)[:, None]
    neighbors = np.full((len(grid), 4), -1, dtype=np.int64)
    for slot, offset in enumerate(BOND_OFFSETS):
        target = grid + sign * offset
        rel = target - origin
        wrapped = np.where(periodic, rel % extent, rel)
        inside = np.all((wrapped >= 0) & (wrapped < extent), axis=1)
        tkeys = (wrapped[:, 2] * extent[1] + wrapped[:, 1]) * extent[0] \
            + wrapped[:, 0]
        pos = np.searchsorted(sorted_keys, tkeys)
        pos = np.clip(pos, 0, len(sorted_keys) - 1)
        found = inside & (sorted_keys[pos] == tkeys)
        neighbors[found, slot] = order[pos[found]]
    return neighbors


def bond_pairs(structure: AtomisticStructure):
    """(anion, cation, slot) index arrays, one entry per bond.
    """
    cations = structure.cations
    nb = structure.neighbors[cations]
    c_idx, slot = np.nonzero(nb >= 0)
    cation = cations[c_idx]
    anion = nb[c_idx, slot]
    return anion, cation, slot


def bond_vectors(structure: AtomisticStructure, frm, to, positions=None):
    """Vectors from sites `frm' to sites `to', minimum image on periodic axes.
    """
    if positions is None:
        positions = structure.positions
    vec = positions[to] - positions[frm]
    if any(structure.periodic):
        box = structure.box
        for d in range(3):
            if structure.periodic[d]:
                vec[:, d] -= box[d] * np.round(vec[:, d] / box[d])
    return vec


def _box_grid(geometry: DotGeometry, lattice_constant):
    q = lattice_constant / 4.0
    lx, ly, lz = geometry.box_lengths()
    nx = int(math.ceil(lx / lattice_constant))
    ny = int(math.ceil(ly / lattice_constant))
    z0 = int(math.floor(-(lz - geometry.height) / 2.0 / q))
    z1 = int(math.ceil((geometry.height + (lz - geometry.height) / 2.0) / q))
    nz = int(math.ceil((z1 - z0) / 4.0))
    origin = np.array([-2 * nx, -2 * ny, z0], dtype=np.int64)
    extent = np.array([4 * nx, 4 * ny, 4 * nz], dtype=np.int64)
    return origin, extent


def _rng(seed, stream):
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(seq))


def _assign_species(db, geometry, disorder, sublattice, region, rng):
    dot = db.material(geometry.dot_material)
    buffer = db.material(geometry.buffer_material)
    n = len(sublattice)
    is_cation = sublattice == CATION
    elements = np.empty(n, dtype='<U2')
    elements[~is_cation & (region == DOT)] = dot.anion
    elements[~is_cation & (region != DOT)] = buffer.anion
    elements[is_cation & (region == DOT)] = dot.cation
    elements[is_cation & (region != DOT)] = buffer.cation

    # one uniform draw per site regardless of mode keeps realizations
    # comparable across disorder settings
    u = rng.random(n)
    if disorder.mode == 'alloy':
        swap = is_cation & (region == DOT) & (u < disorder.alloy_fraction)
        elements[swap] = buffer.cation
    elif disorder.mode == 'interface':
        mixed = is_cation & (region == INTERFACE)
        elements[mixed] = np.where(u[mixed] < 0.5, dot.cation, buffer.cation)
    return elements


def _assign_isotopes(db, elements, disorder, rng):
    isotope = np.zeros(len(elements), dtype=np.int8)
    if not disorder.isotope_sampling:
        return isotope
    u = rng.random(len(elements))
    for element in sorted(set(elements.tolist())):
        species = db.species_for(element)
        abundance = np.array([iso.abundance for iso in species.isotopes])
        cdf = np.cumsum(abundance) / abundance.sum()
        mask = elements == element
        idx = np.searchsorted(cdf, u[mask], side='right')
        isotope[mask] = np.minimum(idx, len(cdf) - 1)
    return isotope


def build_structure(geometry: DotGeometry, disorder: DisorderSpec = None,
                    seed=None, db=None) -> AtomisticStructure:
    """Generate the dot + buffer structure for one disorder realization.
    """
    disorder = disorder or DisorderSpec()
    if seed is None:
        seed = disorder.seed if disorder.seed is not None else 0
    db = db or load_database()
    lattice_constant = db.material(geometry.buffer_material).lattice_constant
    origin, extent = _box_grid(geometry, lattice_constant)
    grid, sublattice = _lattice_points(origin, extent)
    positions = grid * (lattice_constant / 4.0)
    thickness = (disorder.interface_thickness
                 if disorder.mode == 'interface' else 0.0)
    region = _region_codes(geometry, positions, grid, lattice_constant,
                           thickness)
    elements = _assign_species(db, geometry, disorder, sublattice, region,
                               _rng(seed, 0))
    isotope = _assign_isotopes(db, elements, disorder, _rng(seed, 1))
    periodic = (False, False, False)
    neighbors = find_neighbors(grid, sublattice, origin, extent, periodic)
    structure = AtomisticStructure(
        geometry=geometry, disorder=disorder, seed=int(seed),
        lattice_constant=lattice_constant, grid=grid, positions=positions,
        elements=elements, sublattice=sublattice, region=region,
        isotope=isotope, neighbors=neighbors, origin=origin, extent=extent,
        periodic=periodic)
    log.debug("Built structure D=%s h=%s mode=%s seed=%s: %s",
              geometry.base_diameter, geometry.height, disorder.mode, seed,
              structure.counts())
    return structure


def build_bulk(material, cells=(2, 2, 2), periodic=True, db=None,
               lattice_constant=None) -> AtomisticStructure:
    """Bulk zinc-blende supercell of `cells' conventional cells.
    """
    db = db or load_database()
    mat = db.material(material)
    a = lattice_constant or mat.lattice_constant
    cells = np.asarray(cells, dtype=np.int64)
    origin = np.zeros(3, dtype=np.int64)
    extent = 4 * cells
    grid, sublattice = _lattice_points(origin, extent)
    elements = np.where(sublattice == CATION, mat.cation, mat.anion) \
        .astype('<U2')
    periodic = (bool(periodic),) * 3
    neighbors = find_neighbors(grid, sublattice, origin, extent, periodic)
    box = tuple(float(c * a) for c in cells)
    geometry = DotGeometry(0.0, 0.0, dot_material=material,
                           buffer_material=material, margin_lateral=0.0,
                           margin_vertical=0.0, box=box)
    return AtomisticStructure(
        geometry=geometry, disorder=DisorderSpec(), seed=0,
        lattice_constant=a, grid=grid, positions=grid * (a / 4.0),
        elements=elements, sublattice=sublattice,
        region=np.full(len(grid), BUFFER, dtype=np.int8),
        isotope=np.zeros(len(grid), dtype=np.int8), neighbors=neighbors,
        origin=origin, extent=extent, periodic=periodic)


def realization_seed(base_seed, index):
    """Seed of ensemble member `index'; member 0 uses `base_seed' itself.
    """
    if index == 0:
        return int(base_seed)
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(index,))
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def ensemble(geometries, disorder: DisorderSpec, n: int, base_seed=0,
             db=None) -> t.Iterator[AtomisticStructure]:
    """Yield `n' independent realizations for every geometry in turn.
    """
    if n < 1:
        raise GeometryException("Ensemble size must be >= 1, got {}"
                                .format(n))
    if isinstance(geometries, DotGeometry):
        geometries = [geometries]
    db = db or load_database()
    for geometry in geometries:
        for i in range(n):
            yield build_structure(geometry, disorder,
                                  realization_seed(base_seed, i), db=db)


def structure_digest(structure: AtomisticStructure):
    return hash_arrays(structure.grid, structure.positions,
                       structure.elements.astype('S2'), structure.sublattice,
                       structure.region, structure.isotope,
                       np.array([structure.seed], dtype=np.int64))


STRUCTURE_COLUMNS = ('index', 'element', 'ix', 'iy', 'iz', 'x_nm', 'y_nm',
                     'z_nm', 'sublattice', 'region', 'isotope')


def export_structure(structure: AtomisticStructure, path, extra=None):
    """Columnar text, one row per site, plus a JSON sidecar.
    """
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(str(path), 'w') as fout:
        fout.write('# ' + ' '.join(STRUCTURE_COLUMNS) + '\n')
        for i in range(structure.site_count):
            ix, iy, iz = structure.grid[i]
            x, y, z = structure.positions[i]
            fout.write('{} {} {} {} {} {!r} {!r} {!r} {} {} {}\n'.format(
                i, structure.elements[i], ix, iy, iz,
                float(x), float(y), float(z),
                SUBLATTICE_NAMES[structure.sublattice[i]],
                REGION_NAMES[structure.region[i]], structure.isotope[i]))
    meta = {
        "geometry": attr.asdict(structure.geometry),
        "disorder": attr.asdict(structure.disorder),
        "seed": structure.seed,
        "lattice_constant": structure.lattice_constant,
        "origin": [int(v) for v in structure.origin],
        "extent": [int(v) for v in structure.extent],
        "periodic": list(structure.periodic),
        "counts": structure.counts(),
        "digest": structure_digest(structure),
    }
    if extra:
        meta.update(extra)
    with open(str(_sidecar(path)), 'w') as fout:
        json.dump(meta, fout, indent=4, sort_keys=True)
    return path


def _sidecar(path):
    return path.with_suffix('.json')


def import_structure(path) -> AtomisticStructure:
    path = pathlib.Path(path)
    with open(str(_sidecar(path))) as fin:
        meta = json.load(fin)
    grid, positions, elements, sub, region, isotope = [], [], [], [], [], []
    with open(str(path)) as fin:
        for line in fin:
            if line.startswith('#') or not line.strip():
                continue
            cols = line.split()
            elements.append(cols[1])
            grid.append((int(cols[2]), int(cols[3]), int(cols[4])))
            positions.append((float(cols[5]), float(cols[6]),
                              float(cols[7])))
            sub.append(SUBLATTICE_NAMES.index(cols[8]))
            region.append(REGION_NAMES.index(cols[9]))
            isotope.append(int(cols[10]))
    geom = dict(meta['geometry'])
    geometry = DotGeometry(**geom)
    disorder = DisorderSpec(**meta['disorder'])
    grid = np.array(grid, dtype=np.int64).reshape(-1, 3)
    sublattice = np.array(sub, dtype=np.int8)
    origin = np.array(meta['origin'], dtype=np.int64)
    extent = np.array(meta['extent'], dtype=np.int64)
    periodic = tuple(bool(p) for p in meta['periodic'])
    return AtomisticStructure(
        geometry=geometry, disorder=disorder, seed=meta['seed'],
        lattice_constant=meta['lattice_constant'], grid=grid,
        positions=np.array(positions, dtype=float).reshape(-1, 3),
        elements=np.array(elements, dtype='<U2'), sublattice=sublattice,
        region=np.array(region, dtype=np.int8),
        isotope=np.array(isotope, dtype=np.int8),
        neighbors=find_neighbors(grid, sublattice, origin, extent, periodic),
        origin=origin, extent=extent, periodic=periodic)


def with_periodic(structure: AtomisticStructure, periodic=True):
    """Copy of `structure' with its neighbour table rebuilt for the given
    boundary condition.
    """
    if isinstance(periodic, bool):
        periodic = (periodic,) * 3
    periodic = tuple(bool(p) for p in periodic)
    neighbors = find_neighbors(structure.grid, structure.sublattice,
                               structure.origin, structure.extent, periodic)
    return attr.evolve(structure, neighbors=neighbors, periodic=periodic)
