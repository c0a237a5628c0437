"""Conduction states near a reference energy sigma.

The default folded-spectrum method runs Lanczos (ARPACK) on (H - sigma)^2,
whose lowest eigenvalues belong to the states of H closest to sigma. The
converged subspace is rotated by a Rayleigh-Ritz step on H itself. Callers
targeting the conduction band keep only the states above a midgap sigma.
"""
import json
import pathlib

import attr
import numpy as np
import scipy.linalg
import scipy.sparse.linalg as sla

from .slater_koster import ORBITAL_TYPE
from .utils import QdHyperfineException
from .utils import logger as log

METHODS = ('folded', 'shift-invert', 'dense')
DENSE_LIMIT = 6000
S_CHARACTER_WARNING = 0.5


class SolverException(QdHyperfineException):
    pass


@attr.s
class WaveFunction:
    energy = attr.ib()
    # (n_sites, n_orb) real amplitudes
    amplitudes = attr.ib(repr=False)
    orbitals = attr.ib()
    tier = attr.ib(default='')
    residual = attr.ib(default=0.0)
    sigma = attr.ib(default=None)

    def _columns(self, orb_type):
        return [i for i, o in enumerate(self.orbitals)
                if ORBITAL_TYPE[o] == orb_type]

    @property
    def n_sites(self):
        return self.amplitudes.shape[0]

    @property
    def alpha(self):
        """s amplitude per site.
        """
        return self.amplitudes[:, self._columns('s')[0]]

    @property
    def beta(self):
        """s* amplitude per site, zero for tiers without s*.
        """
        cols = self._columns('S')
        if not cols:
            return np.zeros(self.n_sites)
        return self.amplitudes[:, cols[0]]

    @property
    def norm(self):
        return float(np.sum(self.amplitudes ** 2))

    def site_weights(self):
        return np.sum(self.amplitudes ** 2, axis=1)

    @property
    def s_character(self):
        s_weight = np.sum(self.alpha ** 2) + np.sum(self.beta ** 2)
        return float(s_weight / self.norm)

    def vector(self):
        return self.amplitudes.ravel()


def _fix_sign(vec):
    """Make the largest-magnitude component positive.
    """
    i = int(np.argmax(np.abs(vec)))
    return -vec if vec[i] < 0 else vec


def _start_vector(n):
    rng = np.random.Generator(np.random.Philox(12345))
    return rng.standard_normal(n)


def _folded_operator(matrix, sigma):
    n = matrix.shape[0]

    def matvec(x):
        x = np.ravel(x)
        y = matrix.dot(x) - sigma * x
        return matrix.dot(y) - sigma * y

    return sla.LinearOperator((n, n), matvec=matvec, dtype=float)


def _ritz(matrix, basis):
    """Rayleigh-Ritz rotation of an orthonormalized basis, ascending.
    """
    q, _ = np.linalg.qr(basis)
    projected = q.T.dot(matrix.dot(q))
    projected = 0.5 * (projected + projected.T)
    energies, rot = scipy.linalg.eigh(projected)
    return energies, q.dot(rot)


def _eigenpairs(matrix, sigma, m, method, arpack_tol, max_iter):
    n = matrix.shape[0]
    if method == 'dense' or m >= n - 1:
        if n > DENSE_LIMIT and method == 'dense':
            raise SolverException(
                "Dense solver refused: dimension {} > {}"
                .format(n, DENSE_LIMIT))
        dense = matrix.toarray() if hasattr(matrix, 'toarray') else matrix
        return scipy.linalg.eigh(dense)
    try:
        if method == 'folded':
            _, vecs = sla.eigsh(_folded_operator(matrix, sigma), k=m,
                                which='SA', tol=arpack_tol, maxiter=max_iter,
                                v0=_start_vector(n))
        elif method == 'shift-invert':
            _, vecs = sla.eigsh(matrix.tocsc(), k=m, sigma=sigma,
                                which='LM', tol=arpack_tol, maxiter=max_iter,
                                v0=_start_vector(n))
        else:
            raise SolverException(
                "Unknown solver method {!r}, expected one of {}"
                .format(method, METHODS))
    except sla.ArpackNoConvergence as e:
        raise SolverException(
            "Eigensolver did not converge ({} of {} pairs): {}"
            .format(len(e.eigenvalues), m, e))
    return _ritz(matrix, vecs)


def _select(energies, sigma, k, above):
    if above:
        return np.flatnonzero(energies > sigma)[:k]
    nearest = np.argsort(np.abs(energies - sigma), kind='stable')[:k]
    return np.sort(nearest)


def solve_ground_conduction(hamiltonian, sigma, k=2, tol=1e-6,
                            method='folded', max_iter=None, max_states=64,
                            arpack_tol=0.0, above=False):
    """The `k' eigenstates of H nearest `sigma', ascending in energy.

    With `above' only states above `sigma' are kept, the lowest `k' of
    them; that is how conduction states are picked with sigma in the gap.
    `tol' bounds the residual |H psi - E psi| of every returned state.
    """
    if method not in METHODS:
        raise SolverException("Unknown solver method {!r}, expected one of "
                              "{}".format(method, METHODS))
    if k < 1:
        raise SolverException("Number of states must be >= 1")
    matrix = hamiltonian.matrix
    n = matrix.shape[0]
    norb = hamiltonian.n_orbitals
    m = min(max(2 * k, k + 2), n)
    while True:
        energies, vecs = _eigenpairs(matrix, sigma, m, method, arpack_tol,
                                     max_iter)
        selected = _select(energies, sigma, k, above)
        if len(selected) >= k or m >= min(n, max_states) \
                or method == 'dense':
            break
        log.debug("Only %d of %d states above sigma=%.4f among %d pairs, "
                  "widening", len(selected), k, sigma, m)
        m = min(2 * m, n, max_states)

    if len(selected) == 0:
        raise SolverException(
            "No eigenstates above sigma={:.4f} eV among the {} closest; "
            "sigma is not below the conduction states".format(sigma, m))
    if len(selected) < k:
        log.warning("Only %d states %s sigma=%.4f eV found", len(selected),
                    'above' if above else 'near', sigma)
    states = []
    for i in selected:
        vec = _fix_sign(vecs[:, i])
        vec = vec / np.linalg.norm(vec)
        residual = float(np.linalg.norm(matrix.dot(vec) - energies[i] * vec))
        if residual > tol:
            raise SolverException(
                "State at {:.6f} eV has residual {:.2e} > tol {:.1e}"
                .format(energies[i], residual, tol))
        wf = WaveFunction(float(energies[i]), vec.reshape(-1, norb),
                          tuple(hamiltonian.orbitals), hamiltonian.tier,
                          residual, float(sigma))
        states.append(wf)
    ground = states[0]
    if ground.s_character < S_CHARACTER_WARNING:
        log.warning("Target state at %.4f eV has s-character %.2f < %.1f; "
                    "sigma=%.4f may have resolved to a valence-like state",
                    ground.energy, ground.s_character, S_CHARACTER_WARNING,
                    sigma)
    log.debug("Solved %d states, sigma=%.4f: %s", len(states), sigma,
              [round(s.energy, 6) for s in states])
    return states


def orbital_spacing(states):
    """Energy gap between the two lowest conduction states, eV.
    """
    if len(states) < 2:
        raise SolverException("Orbital spacing needs at least two states")
    return states[1].energy - states[0].energy


def overlap(wf_a: WaveFunction, wf_b: WaveFunction):
    if wf_a.amplitudes.shape != wf_b.amplitudes.shape:
        raise SolverException(
            "Wavefunctions live on different grids: {} vs {}"
            .format(wf_a.amplitudes.shape, wf_b.amplitudes.shape))
    return abs(float(np.dot(wf_a.vector(), wf_b.vector())))


def write_wavefunction(wf: WaveFunction, path):
    """`path'.npy with the amplitudes plus a JSON sidecar.
    """
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(str(path.with_suffix('.npy')), wf.amplitudes)
    meta = {
        "energy_ev": wf.energy,
        "orbitals": list(wf.orbitals),
        "tier": wf.tier,
        "ordering": "site-major",
        "residual": wf.residual,
        "sigma_ev": wf.sigma,
        "s_character": wf.s_character,
        "n_sites": wf.n_sites,
    }
    with open(str(path.with_suffix('.json')), 'w') as fout:
        json.dump(meta, fout, indent=4, sort_keys=True)
    return path.with_suffix('.npy')


def read_wavefunction(path) -> WaveFunction:
    path = pathlib.Path(path)
    amplitudes = np.load(str(path.with_suffix('.npy')))
    with open(str(path.with_suffix('.json'))) as fin:
        meta = json.load(fin)
    return WaveFunction(meta['energy_ev'], amplitudes,
                        tuple(meta['orbitals']), meta['tier'],
                        meta['residual'], meta['sigma_ev'])
