"""Two-centre Slater-Koster couplings for s, p, d and s* orbitals.

A block couples the orbitals of the anion (rows) to those of the cation
(columns) for the anion->cation direction cosines (l, m, n). Integrals are
keyed "anion-type,cation-type,bond" with types s, p, d and S (s*), e.g.
"s,p,sigma" is the integral between an anion s and a cation p orbital.
"""
import math

import numpy as np

from .utils import QdHyperfineException

SQRT3 = math.sqrt(3.0)

TIERS = {
    's': ('s',),
    'sp3s*': ('s', 'px', 'py', 'pz', 's*'),
    'sp3d5s*': ('s', 'px', 'py', 'pz', 'dyz', 'dzx', 'dxy', 'dx2-y2', 'dz2',
                's*'),
}

ORBITAL_TYPE = {
    's': 's', 's*': 'S',
    'px': 'p', 'py': 'p', 'pz': 'p',
    'dyz': 'd', 'dzx': 'd', 'dxy': 'd', 'dx2-y2': 'd', 'dz2': 'd',
}

ANGULAR = {'s': 0, 'S': 0, 'p': 1, 'd': 2}

TYPE_BONDS = {
    (0, 0): ('sigma',),
    (0, 1): ('sigma',),
    (0, 2): ('sigma',),
    (1, 1): ('sigma', 'pi'),
    (1, 2): ('sigma', 'pi'),
    (2, 2): ('sigma', 'pi', 'delta'),
}

# x -> y -> z -> x, applied to both orbitals and direction cosines
_CYCLE = {'px': 'py', 'py': 'pz', 'pz': 'px',
          'dxy': 'dyz', 'dyz': 'dzx', 'dzx': 'dxy'}
_CYCLE_BACK = {v: k for k, v in _CYCLE.items()}
_P_BASE = 'px'
_T2G_BASE = 'dxy'
_T2G = ('dxy', 'dyz', 'dzx')


class HamiltonianException(QdHyperfineException):
    pass


def tier_orbitals(tier):
    if tier not in TIERS:
        raise HamiltonianException(
            "Unknown basis tier {!r}, expected one of {}"
            .format(tier, sorted(TIERS)))
    return TIERS[tier]


def required_integrals(tier):
    """Integral keys a parameter set must provide for `tier'.
    """
    types = sorted({ORBITAL_TYPE[o] for o in tier_orbitals(tier)},
                   key=lambda t: (ANGULAR[t], t))
    keys = []
    for t1 in types:
        for t2 in types:
            pair = tuple(sorted((ANGULAR[t1], ANGULAR[t2])))
            for bond in TYPE_BONDS[pair]:
                keys.append('{},{},{}'.format(t1, t2, bond))
    return keys


def integral_key(t1, t2, bond):
    return '{},{},{}'.format(t1, t2, bond)


class _Integrals:
    """Integral lookup, optionally with the two orbital types swapped.
    """
    def __init__(self, integrals, swapped=False):
        self._integrals = integrals
        self._swapped = swapped

    def __call__(self, t1, t2, bond):
        if self._swapped:
            t1, t2 = t2, t1
        key = integral_key(t1, t2, bond)
        if key not in self._integrals:
            raise HamiltonianException(
                "Missing two-centre integral {}".format(key))
        return self._integrals[key]

    def swapped(self):
        return _Integrals(self._integrals, not self._swapped)


def _p_p(o1, o2, l, m, n, V):
    s, p = V('p', 'p', 'sigma'), V('p', 'p', 'pi')
    if o1 == 'px' and o2 == 'px':
        return l * l * s + (1 - l * l) * p
    if o1 == 'px' and o2 == 'py':
        return l * m * (s - p)
    if o1 == 'px' and o2 == 'pz':
        return l * n * (s - p)
    return None


def _p_d(o1, o2, l, m, n, V):
    """o1 in the p shell, o2 in the d shell.
    """
    s, p = V(*_types(o1, o2), 'sigma'), V(*_types(o1, o2), 'pi')
    lm2 = l * l - m * m
    if o2 in _T2G:
        if o1 != _P_BASE:
            return None
        if o2 == 'dxy':
            return SQRT3 * l * l * m * s + m * (1 - 2 * l * l) * p
        if o2 == 'dyz':
            return SQRT3 * l * m * n * s - 2 * l * m * n * p
        return SQRT3 * l * l * n * s + n * (1 - 2 * l * l) * p
    if o2 == 'dx2-y2':
        if o1 == 'px':
            return SQRT3 / 2 * l * lm2 * s + l * (1 - lm2) * p
        if o1 == 'py':
            return SQRT3 / 2 * m * lm2 * s - m * (1 + lm2) * p
        return SQRT3 / 2 * n * lm2 * s - n * lm2 * p
    # dz2
    c = n * n - (l * l + m * m) / 2
    if o1 == 'px':
        return l * c * s - SQRT3 * l * n * n * p
    if o1 == 'py':
        return m * c * s - SQRT3 * m * n * n * p
    return n * c * s + SQRT3 * n * (l * l + m * m) * p


def _d_d(o1, o2, l, m, n, V):
    s = V('d', 'd', 'sigma')
    p = V('d', 'd', 'pi')
    d = V('d', 'd', 'delta')
    l2, m2, n2 = l * l, m * m, n * n
    lm2 = l2 - m2
    c = n2 - (l2 + m2) / 2
    if o1 in _T2G and o2 in _T2G:
        if o1 != _T2G_BASE:
            return None
        if o2 == 'dxy':
            return (3 * l2 * m2 * s + (l2 + m2 - 4 * l2 * m2) * p
                    + (n2 + l2 * m2) * d)
        if o2 == 'dyz':
            return (3 * l * m2 * n * s + l * n * (1 - 4 * m2) * p
                    + l * n * (m2 - 1) * d)
        return (3 * l2 * m * n * s + m * n * (1 - 4 * l2) * p
                + m * n * (l2 - 1) * d)
    if o1 in _T2G:
        if o2 == 'dx2-y2':
            if o1 == 'dxy':
                return (1.5 * l * m * lm2 * s + 2 * l * m * (m2 - l2) * p
                        + 0.5 * l * m * lm2 * d)
            if o1 == 'dyz':
                return (1.5 * m * n * lm2 * s - m * n * (1 + 2 * lm2) * p
                        + m * n * (1 + lm2 / 2) * d)
            return (1.5 * n * l * lm2 * s + n * l * (1 - 2 * lm2) * p
                    - n * l * (1 - lm2 / 2) * d)
        if o1 == 'dxy':
            return (SQRT3 * l * m * c * s - 2 * SQRT3 * l * m * n2 * p
                    + SQRT3 / 2 * l * m * (1 + n2) * d)
        if o1 == 'dyz':
            return (SQRT3 * m * n * c * s + SQRT3 * m * n * (l2 + m2 - n2) * p
                    - SQRT3 / 2 * m * n * (l2 + m2) * d)
        return (SQRT3 * l * n * c * s + SQRT3 * l * n * (l2 + m2 - n2) * p
                - SQRT3 / 2 * l * n * (l2 + m2) * d)
    if o1 in ('dx2-y2', 'dz2') and o2 in _T2G:
        # e_g-t2g: even in the cosines, so the pair is symmetric
        return _d_d(o2, o1, l, m, n, V)
    if o1 == 'dx2-y2' and o2 == 'dx2-y2':
        return (0.75 * lm2 * lm2 * s + (l2 + m2 - lm2 * lm2) * p
                + (n2 + lm2 * lm2 / 4) * d)
    if o1 == 'dz2' and o2 == 'dz2':
        return c * c * s + 3 * n2 * (l2 + m2) * p + 0.75 * (l2 + m2) ** 2 * d
    # dx2-y2 / dz2 pair
    return (SQRT3 / 2 * lm2 * c * s + SQRT3 * n2 * (m2 - l2) * p
            + SQRT3 / 4 * (1 + n2) * lm2 * d)


def _types(o1, o2):
    return ORBITAL_TYPE[o1], ORBITAL_TYPE[o2]


def _cycle_back(o1, o2, cosines):
    """Rotate (o1, o2) back towards the base orbital of their shell.

    E(P a, P b)(l, m, n) = E(a, b)(m, n, l) for the cyclic relabeling P.
    """
    l, m, n = cosines
    return (_CYCLE_BACK.get(o1, o1), _CYCLE_BACK.get(o2, o2), (m, n, l))


def _ordered_element(o1, o2, cosines, V):
    """Element for angular momentum of o1 <= that of o2.
    """
    l, m, n = cosines
    t1, t2 = _types(o1, o2)
    a1, a2 = ANGULAR[t1], ANGULAR[t2]
    if a1 == 0 and a2 == 0:
        return V(t1, t2, 'sigma') * np.ones_like(l)
    if a1 == 0 and a2 == 1:
        cos = {'px': l, 'py': m, 'pz': n}[o2]
        return cos * V(t1, t2, 'sigma')
    if a1 == 0 and a2 == 2:
        s = V(t1, t2, 'sigma')
        l2, m2, n2 = l * l, m * m, n * n
        return {
            'dxy': SQRT3 * l * m * s,
            'dyz': SQRT3 * m * n * s,
            'dzx': SQRT3 * n * l * s,
            'dx2-y2': SQRT3 / 2 * (l2 - m2) * s,
            'dz2': (n2 - (l2 + m2) / 2) * s,
        }[o2]
    kernel = {(1, 1): _p_p, (1, 2): _p_d, (2, 2): _d_d}[(a1, a2)]
    pair = (o1, o2)
    for _ in range(3):
        value = kernel(o1, o2, cosines[0], cosines[1], cosines[2], V)
        if value is not None:
            return value
        o1, o2, cosines = _cycle_back(o1, o2, cosines)
    raise HamiltonianException(
        "No Slater-Koster rule for {}-{}".format(*pair))


def sk_element(o1, o2, cosines, integrals):
    """Coupling of orbital o1 on the anion to o2 on the cation.
    """
    V = integrals if isinstance(integrals, _Integrals) \
        else _Integrals(integrals)
    a1 = ANGULAR[ORBITAL_TYPE[o1]]
    a2 = ANGULAR[ORBITAL_TYPE[o2]]
    if a1 <= a2:
        return _ordered_element(o1, o2, cosines, V)
    l, m, n = cosines
    return _ordered_element(o2, o1, (-l, -m, -n), V.swapped())


def sk_blocks(cosines, integrals, tier):
    """Blocks for many bonds at once, shape (n_bonds, n_orb, n_orb).

    `cosines' is (n_bonds, 3); integral values may be scalars or per-bond
    arrays.
    """
    cosines = np.atleast_2d(np.asarray(cosines, dtype=float))
    orbitals = tier_orbitals(tier)
    l, m, n = cosines[:, 0], cosines[:, 1], cosines[:, 2]
    V = _Integrals(integrals)
    blocks = np.zeros((len(cosines), len(orbitals), len(orbitals)))
    for i, o1 in enumerate(orbitals):
        for j, o2 in enumerate(orbitals):
            blocks[:, i, j] = sk_element(o1, o2, (l, m, n), V)
    return blocks


def slater_koster_block(l, m, n, integrals, tier):
    """Anion x cation coupling block for one bond direction.
    """
    norm = l * l + m * m + n * n
    if abs(norm - 1.0) > 1e-12:
        raise HamiltonianException(
            "Direction cosines ({}, {}, {}) are not normalized: "
            "l^2+m^2+n^2 = {!r}".format(l, m, n, norm))
    return sk_blocks([(l, m, n)], integrals, tier)[0]


def strain_scale(value, d0, d, eta=2.0):
    """Harrison power-law scaling V (d0/d)^eta of a two-centre integral.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise HamiltonianException(
            "Bond length must be positive for Harrison scaling")
    scaled = value * (d0 / d) ** eta
    return float(scaled) if scaled.ndim == 0 else scaled
