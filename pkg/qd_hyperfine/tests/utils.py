import functools

import attr
import numpy as np

from qd_hyperfine import geometry as geo
from qd_hyperfine.hyperfine import HyperfineMap
from qd_hyperfine.physcore import Isotope, NuclearSpecies, load_database
from qd_hyperfine.solver import WaveFunction


@functools.lru_cache(maxsize=None)
def database():
    return load_database()


def database_with(name, spin, g_factor=1.0):
    """The bundled database plus a one-isotope toy species.
    """
    db = database()
    species = NuclearSpecies(name, [Isotope(1, 1.0, spin, g_factor)], 0.0)
    return attr.evolve(db, species=db.species + (species,))


def small_dot(diameter=3.0, height=1.5, margin=1.0, mode='none',
              fraction=0.0, seed=0, thickness=1.25, isotopes=False):
    geometry = geo.DotGeometry(diameter, height, margin_lateral=margin,
                               margin_vertical=margin)
    disorder = geo.DisorderSpec(mode, fraction, thickness, seed, isotopes)
    return geo.build_structure(geometry, disorder, seed, database())


def toy_structure(elements, sublattice=None, region=None):
    """Sites on a line with no bonds, enough for bath arithmetic.
    """
    n = len(elements)
    if sublattice is None:
        sublattice = [geo.CATION] * n
    if region is None:
        region = [geo.DOT] * n
    grid = np.zeros((n, 3), dtype=np.int64)
    grid[:, 0] = 4 * np.arange(n)
    return geo.AtomisticStructure(
        geometry=geo.DotGeometry(3.0, 1.0), disorder=geo.DisorderSpec(),
        seed=0, lattice_constant=0.56533, grid=grid,
        positions=grid * 0.56533 / 4.0,
        elements=np.array(elements, dtype='<U2'),
        sublattice=np.array(sublattice, dtype=np.int8),
        region=np.array(region, dtype=np.int8),
        isotope=np.zeros(n, dtype=np.int8),
        neighbors=np.full((n, 4), -1, dtype=np.int64),
        origin=np.zeros(3, dtype=np.int64),
        extent=np.array([4 * n, 4, 4], dtype=np.int64))


def toy_map(values):
    values = np.asarray(values, dtype=float)
    return HyperfineMap(values, np.zeros_like(values))


def wavefunction(alpha, beta=None, tier='sp3s*'):
    """Wavefunction with only s (and s*) amplitudes set.
    """
    alpha = np.asarray(alpha, dtype=float)
    if tier == 's':
        return WaveFunction(0.0, alpha[:, None].copy(), ('s',), 's')
    amps = np.zeros((len(alpha), 5))
    amps[:, 0] = alpha
    if beta is not None:
        amps[:, 4] = beta
    return WaveFunction(0.0, amps, ('s', 'px', 'py', 'pz', 's*'), tier)


def random_wavefunction(n_sites, n_orb=5, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    amps = rng.standard_normal((n_sites, n_orb))
    amps /= np.linalg.norm(amps)
    orbitals = ('s', 'px', 'py', 'pz', 's*')[:n_orb]
    return WaveFunction(0.0, amps, orbitals, 'sp3s*')
