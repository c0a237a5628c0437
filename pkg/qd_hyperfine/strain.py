"""Keating valence force field: energy, analytic gradient and relaxation.

Positions in nm, energies in eV, force constants in eV/nm^2.
"""
import math
import typing as t

import attr
import numpy as np
from scipy import optimize

from . import geometry as geo
from .physcore import load_database
from .utils import QdHyperfineException, fixed_order_sum
from .utils import logger as log

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITER = 20000
# scipy's CG may stop early on loss of precision; resume from where it was
MAX_RESTARTS = 5

SLOT_PAIRS = [(s1, s2) for s1 in range(4) for s2 in range(s1 + 1, 4)]


class StrainException(QdHyperfineException):
    pass


class ConvergenceException(StrainException):
    def __init__(self, message, result=None, norm=None):
        super().__init__(message)
        self.result = result
        self.norm = norm


@attr.s(frozen=True)
class BondParameters:
    d0 = attr.ib()
    alpha = attr.ib()
    beta = attr.ib()

    def __attrs_post_init__(self):
        if not (self.d0 > 0 and self.alpha > 0 and self.beta > 0):
            raise StrainException(
                "VFF parameters must be positive: {}".format(self))


@attr.s(frozen=True)
class VffModel:
    """Keating parameters per bond type, keyed by the bond's cation.
    """
    bonds = attr.ib()
    provenance = attr.ib(default='')

    @classmethod
    def from_database(cls, db, provenance='database'):
        bonds = {}
        for mat in db.materials:
            bonds[mat.cation] = BondParameters(mat.bond_length, mat.vff_alpha,
                                               mat.vff_beta)
        return cls(bonds, provenance)

    def for_cation(self, element) -> BondParameters:
        if element not in self.bonds:
            raise StrainException(
                "No VFF parameters for bonds to cation {}".format(element))
        return self.bonds[element]


@attr.s
class VffTopology:
    """Bonds and bond angles with their Keating coefficients.
    """
    bond_anion = attr.ib()
    bond_cation = attr.ib()
    bond_d0 = attr.ib()
    bond_coef = attr.ib()
    angle_vertex = attr.ib()
    angle_j = attr.ib()
    angle_k = attr.ib()
    angle_coef = attr.ib()
    angle_shift = attr.ib()


@attr.s
class RelaxationResult:
    positions = attr.ib(repr=False)
    energy = attr.ib()
    gradient_norm = attr.ib()
    iterations = attr.ib()
    bond_lengths = attr.ib(repr=False)
    direction_cosines = attr.ib(repr=False)
    converged = attr.ib(default=True)
    energy_trace = attr.ib(factory=list, repr=False)

    def apply(self, structure):
        return structure.with_positions(self.positions)


def bonds(structure) -> t.Tuple[np.ndarray, np.ndarray]:
    """(anion, cation) index arrays, one entry per bond.
    """
    anion, cation, _ = geo.bond_pairs(structure)
    return anion, cation


def angles(structure):
    """(vertex, j, k) index arrays, one entry per bond angle.
    """
    vertex, js, ks = [], [], []
    nb = structure.neighbors
    for s1, s2 in SLOT_PAIRS:
        ok = (nb[:, s1] >= 0) & (nb[:, s2] >= 0)
        idx = np.flatnonzero(ok)
        vertex.append(idx)
        js.append(nb[idx, s1])
        ks.append(nb[idx, s2])
    vertex = np.concatenate(vertex)
    js = np.concatenate(js)
    ks = np.concatenate(ks)
    order = np.lexsort((ks, js, vertex))
    return vertex[order], js[order], ks[order]


def build_topology(structure, model: VffModel) -> VffTopology:
    elements = structure.elements
    params = {el: model.for_cation(el)
              for el in sorted(set(elements[structure.cations].tolist()))}
    d0_of = {el: p.d0 for el, p in params.items()}
    alpha_of = {el: p.alpha for el, p in params.items()}
    beta_of = {el: p.beta for el, p in params.items()}

    anion, cation = bonds(structure)
    cat_el = elements[cation]
    d0 = np.array([d0_of[el] for el in cat_el])
    alpha = np.array([alpha_of[el] for el in cat_el])
    bond_coef = 3.0 * alpha / (8.0 * d0 ** 2)

    vertex, j, k = angles(structure)
    is_cation = structure.sublattice[vertex] == geo.CATION
    # the cation of each arm: the vertex itself or the arm end
    cat_j = np.where(is_cation, vertex, j)
    cat_k = np.where(is_cation, vertex, k)
    el_j, el_k = elements[cat_j], elements[cat_k]
    d0_j = np.array([d0_of[el] for el in el_j])
    d0_k = np.array([d0_of[el] for el in el_k])
    beta = np.sqrt(np.array([beta_of[el] for el in el_j])
                   * np.array([beta_of[el] for el in el_k]))
    angle_coef = 3.0 * beta / (8.0 * d0_j * d0_k)
    angle_shift = d0_j * d0_k / 3.0
    return VffTopology(anion, cation, d0, bond_coef, vertex, j, k,
                       angle_coef, angle_shift)


def _energy_and_gradient(structure, topo: VffTopology, positions,
                         with_gradient=True):
    r = geo.bond_vectors(structure, topo.bond_anion, topo.bond_cation,
                         positions)
    stretch = np.einsum('ij,ij->i', r, r) - topo.bond_d0 ** 2
    e_bond = topo.bond_coef * stretch ** 2

    r1 = geo.bond_vectors(structure, topo.angle_vertex, topo.angle_j,
                          positions)
    r2 = geo.bond_vectors(structure, topo.angle_vertex, topo.angle_k,
                          positions)
    bend = np.einsum('ij,ij->i', r1, r2) + topo.angle_shift
    e_angle = topo.angle_coef * bend ** 2

    energy = float(fixed_order_sum(e_bond) + fixed_order_sum(e_angle))
    if not with_gradient:
        return energy, None

    grad = np.zeros_like(positions)
    g_bond = (4.0 * topo.bond_coef * stretch)[:, None] * r
    np.add.at(grad, topo.bond_cation, g_bond)
    np.add.at(grad, topo.bond_anion, -g_bond)

    g = (2.0 * topo.angle_coef * bend)[:, None]
    np.add.at(grad, topo.angle_j, g * r2)
    np.add.at(grad, topo.angle_k, g * r1)
    np.add.at(grad, topo.angle_vertex, -g * (r1 + r2))
    return energy, grad


def vff_energy(structure, model: VffModel, positions=None):
    """Keating energy of `structure' (or of `positions' on its topology).
    """
    if positions is None:
        positions = structure.positions
    topo = build_topology(structure, model)
    return _energy_and_gradient(structure, topo, positions, False)[0]


def vff_gradient(structure, model: VffModel, positions=None):
    """dE/dx per site, shape (N, 3); forces are its negative.
    """
    if positions is None:
        positions = structure.positions
    topo = build_topology(structure, model)
    return _energy_and_gradient(structure, topo, positions)[1]


def vff_forces(structure, model: VffModel, positions=None):
    return -vff_gradient(structure, model, positions)


def pinned_sites(structure):
    """Sites held at their grid positions: anything missing a neighbour.
    """
    return np.flatnonzero(np.any(structure.neighbors < 0, axis=1))


def _max_force(grad, free):
    if len(free) == 0:
        return 0.0
    return float(np.max(np.linalg.norm(grad[free], axis=1)))


def bond_geometry(structure, positions=None):
    """Bond lengths and anion->cation direction cosines (l, m, n).
    """
    anion, cation = bonds(structure)
    r = geo.bond_vectors(structure, anion, cation, positions)
    lengths = np.linalg.norm(r, axis=1)
    return lengths, r / lengths[:, None]


def relax(structure, model: VffModel, tol=DEFAULT_TOLERANCE,
          max_iter=DEFAULT_MAX_ITER, periodic=False) -> RelaxationResult:
    """Minimize the Keating energy by nonlinear conjugate gradients.

    Undercoordinated boundary sites are pinned. Converged when the largest
    per-atom gradient norm over free sites is <= tol (eV/nm).
    """
    if not tol > 0:
        raise StrainException("Relaxation tolerance must be > 0")
    if periodic and not all(structure.periodic):
        structure = geo.with_periodic(structure, True)
    topo = build_topology(structure, model)
    free = np.setdiff1d(np.arange(structure.site_count),
                        pinned_sites(structure))
    positions = np.array(structure.positions, dtype=float)

    energy, grad = _energy_and_gradient(structure, topo, positions)
    norm = _max_force(grad, free)
    trace = [energy]
    iterations = 0
    if norm > tol:
        def fun(x):
            pos = positions.copy()
            pos[free] = x.reshape(-1, 3)
            e, g = _energy_and_gradient(structure, topo, pos)
            return e, g[free].ravel()

        def record(xk):
            trace.append(fun(xk)[0])

        x = positions[free].ravel()
        # per-atom norm <= sqrt(3) * max component
        gtol = tol / math.sqrt(3.0)
        for attempt in range(MAX_RESTARTS):
            res = optimize.minimize(
                fun, x, jac=True, method='CG', callback=record,
                options={'gtol': gtol, 'maxiter': max_iter - iterations})
            x = res.x
            iterations += int(res.nit)
            positions[free] = x.reshape(-1, 3)
            energy, grad = _energy_and_gradient(structure, topo, positions)
            norm = _max_force(grad, free)
            log.debug("CG pass %d: %d iterations, E=%.10g eV, max |g|=%.3e "
                      "(%s)", attempt, res.nit, energy, norm, res.message)
            if norm <= tol or iterations >= max_iter or res.nit == 0:
                break

    lengths, cosines = bond_geometry(structure, positions)
    result = RelaxationResult(positions, energy, norm, iterations, lengths,
                              cosines, norm <= tol, trace)
    if norm > tol:
        result.converged = False
        raise ConvergenceException(
            "VFF relaxation did not converge after {} iterations: max "
            "gradient norm {:.3e} eV/nm > {:.1e}".format(iterations, norm,
                                                        tol),
            result=result, norm=norm)
    log.info("Relaxed %d sites in %d iterations, E=%.6g eV",
             structure.site_count, iterations, energy)
    return result


def strain_summary(structure, positions=None, model: VffModel = None,
                   db=None):
    """Per-region mean and std of the relative bond-length deviation.

    The bond region is the region of its cation.
    """
    if model is None:
        model = VffModel.from_database(db or load_database())
    anion, cation = bonds(structure)
    lengths, _ = bond_geometry(structure, positions)
    d0 = np.array([model.for_cation(el).d0
                   for el in structure.elements[cation]])
    dev = (lengths - d0) / d0
    summary = {}
    for code, name in enumerate(geo.REGION_NAMES):
        mask = structure.region[cation] == code
        if not mask.any():
            continue
        summary[name] = {
            "bonds": int(mask.sum()),
            "mean": float(np.mean(dev[mask])),
            "std": float(np.std(dev[mask])),
            "mean_length_nm": float(np.mean(lengths[mask])),
        }
    return summary
