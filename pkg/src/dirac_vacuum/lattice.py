"""Lattice Dirac operators on the periodic grid and their PV-regulated vacuum.

Discretization
--------------
Spinors live on the sites of a :class:`~dirac_vacuum.fields.Grid3`.  The
operator is a nearest-neighbour (link) Hamiltonian,

    (D psi)(x) = sum_mu [ X_mu U_mu(x) psi(x + mu) + X_mu^* U_mu(x - mu)^* psi(x - mu) ]
                 + (3 r Gamma / h + m beta + e V(x)) psi(x),

with ``X_mu = alpha_mu / (2 i h) - r Gamma / (2 h)``.  The Wilson term is
carried by ``Gamma = i beta gamma_5``, a fifth Hermitian matrix that
anticommutes with every ``alpha_mu`` and with ``beta``.  Two consequences:

* the free operator squares to ``sum_mu sin^2(p_mu h)/h^2 + W(p)^2 + m^2`` with
  ``W(p) = (r/h) sum_mu (1 - cos p_mu h)``, so the doublers are lifted to the
  cutoff scale and every free level ``+-E(p)`` is twofold degenerate;
* the charge conjugation ``psi -> i beta alpha_2 conj(psi)`` maps ``D_A`` to
  ``-D_{-A}`` exactly, because it flips ``beta`` and ``Gamma`` and keeps ``alpha``.

The links are ``U_mu(x) = exp(-i e theta_mu(x))`` where ``theta_mu(x)`` is
the integral of the trigonometric interpolant of ``A_mu`` along the link from
``x`` to ``x + h e_mu``.  In Fourier space this multiplies each coefficient by
``(exp(i k_mu h) - 1)/(i k_mu)``.  Because the line integral of a gradient is
a difference of end-point values, ``D_{A + grad chi} = exp(i e chi) D_A
exp(-i e chi)`` holds as a matrix identity for gauge functions without
Nyquist content.  With ``V = 0``, ``D^2 = X^2 + m^2`` for a Hermitian ``X`` so
the spectrum stays outside ``(-m, m)``.

Momentum blocks
---------------
If the Fourier support of ``theta`` and ``V`` generates a subgroup ``H`` of
the momentum lattice, ``D`` only couples momenta in the same coset of ``H``.
Energies and densities are therefore computed coset by coset; a single-mode
field on ``n = 16`` splits into 256 blocks of dimension 64.

Normalizations
--------------
``rho(x) = tr Q(x, x) / h^3`` and the current is the exact derivative of the
energy with respect to the sampled ``A`` (see :func:`vacuum_state`), so that
``dF = e h^3 sum_x (rho dV - j . dA)``, the lattice version of
``e int (rho dV - j . dA)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import CapacityError, DegenerateVacuumError, InvalidInputError, NumericalError
from .fields import FourPotential, Grid3, ScalarField, VectorField, field_norms
from .kernel import f2_energy
from .pv import PVScheme

DEFAULT_WILSON = 1.0
DEFAULT_CAPACITY = 4 * 16 ** 3
GAP_TOL = 1e-10
SUPPORT_TOL = 1e-13
FD_STEP = 0.2


# ---------------------------------------------------------------------------
# Dirac matrices

@dataclass(frozen=True)
class DiracMatrices:
    """Standard-representation ``alpha``, ``beta``, spin ``Sigma`` and the Wilson matrix."""

    alpha: tuple
    beta: np.ndarray
    sigma: tuple
    gamma_w: np.ndarray

    def alpha_dot(self, x) -> np.ndarray:
        return sum(float(xi) * a for xi, a in zip(x, self.alpha))

    def charge_conjugation_matrix(self) -> np.ndarray:
        """Unitary part ``i beta alpha_2`` of the anti-unitary charge conjugation."""
        return 1j * self.beta @ self.alpha[1]


@lru_cache(maxsize=1)
def dirac_matrices() -> DiracMatrices:
    """Return the standard representation.

    Examples
    --------
    >>> d = dirac_matrices()
    >>> bool(np.allclose(d.alpha_dot((1, 2, 3)) @ d.alpha_dot((1, 2, 3)), 14 * np.eye(4)))
    True
    """
    s1 = np.array([[0, 1], [1, 0]], dtype=complex)
    s2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
    s3 = np.array([[1, 0], [0, -1]], dtype=complex)
    z = np.zeros((2, 2), dtype=complex)
    i2 = np.eye(2, dtype=complex)
    alpha = tuple(np.block([[z, s], [s, z]]) for s in (s1, s2, s3))
    beta = np.block([[i2, z], [z, -i2]])
    sigma = tuple(np.block([[s, z], [z, s]]) for s in (s1, s2, s3))
    gamma5 = np.block([[z, i2], [i2, z]])
    gamma_w = 1j * beta @ gamma5
    for m in alpha + (beta, gamma_w) + sigma:
        m.flags.writeable = False
    return DiracMatrices(alpha, beta, sigma, gamma_w)


def _hop_matrices(h: float, wilson: float) -> list:
    d = dirac_matrices()
    return [a / (2j * h) - wilson * d.gamma_w / (2 * h) for a in d.alpha]


def _onsite(h: float, mass: float, wilson: float) -> np.ndarray:
    d = dirac_matrices()
    return 3 * wilson / h * d.gamma_w + mass * d.beta


def free_dispersion(grid: Grid3, mass: float, wilson: float = DEFAULT_WILSON) -> np.ndarray:
    """Positive free energies ``E(p)`` on the fermion momentum grid, shape ``(n, n, n)``."""
    h = grid.spacing
    ph = 2 * np.pi * np.arange(grid.n) / grid.n
    s2 = np.sin(ph) ** 2 / h ** 2
    w1 = wilson / h * (1 - np.cos(ph))
    s2_tot = s2[:, None, None] + s2[None, :, None] + s2[None, None, :]
    w_tot = w1[:, None, None] + w1[None, :, None] + w1[None, None, :]
    return np.sqrt(s2_tot + w_tot ** 2 + mass ** 2)


# ---------------------------------------------------------------------------
# Link variables

def link_multiplier(grid: Grid3) -> np.ndarray:
    """Fourier multiplier ``(exp(i k h) - 1)/(i k)`` per axis, shape ``(3, n, n, n)``.

    It maps coefficients of ``A_mu`` to those of the link integral
    ``theta_mu``.  The value is ``h`` at ``k = 0`` and ``0`` at the Nyquist
    index, where the interpolant ``cos(pi x / h)`` integrates to zero over
    any link.
    """
    n, h = grid.n, grid.spacing
    k = grid.fft_momenta_1d
    with np.errstate(divide="ignore", invalid="ignore"):
        phi1 = np.where(k == 0, h, (np.exp(1j * k * h) - 1) / (1j * np.where(k == 0, 1.0, k)))
    if n % 2 == 0:
        phi1[n // 2] = 0.0
    out = np.empty((3,) + grid.shape, dtype=complex)
    out[0] = phi1[:, None, None]
    out[1] = phi1[None, :, None]
    out[2] = phi1[None, None, :]
    return out


def link_integrals(a: VectorField) -> np.ndarray:
    """``theta_mu(x)``: integral of ``A_mu`` along the link ``x -> x + h e_mu``."""
    mult = link_multiplier(a.grid)
    ah = np.fft.fftn(a.values, axes=(1, 2, 3))
    return np.fft.ifftn(mult * ah, axes=(1, 2, 3)).real


def _link_transpose(grid: Grid3, g: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`link_integrals` for the plain sum inner product."""
    mult = link_multiplier(grid)
    gh = np.fft.fftn(g, axes=(1, 2, 3))
    return np.fft.ifftn(np.conj(mult) * gh, axes=(1, 2, 3)).real


def gauge_function_ok(chi: ScalarField) -> bool:
    """True when ``chi`` has no Nyquist content along any axis."""
    n = chi.grid.n
    if n % 2:
        return True
    c = np.abs(chi.fourier)
    nyq = n // 2
    scale = max(1.0, float(c.max()))
    return bool(max(c[nyq].max(), c[:, nyq].max(), c[:, :, nyq].max()) <= 1e-12 * scale)


def random_gauge_function(grid: Grid3, rng: np.random.Generator, amplitude: float = 1.0) -> ScalarField:
    """Smooth random gauge function with the Nyquist planes removed."""
    chi = rng.standard_normal(grid.shape)
    ch = np.fft.fftn(chi)
    if grid.n % 2 == 0:
        nyq = grid.n // 2
        ch[nyq] = 0
        ch[:, nyq] = 0
        ch[:, :, nyq] = 0
    chi = np.fft.ifftn(ch).real
    return ScalarField(grid, amplitude * chi / max(np.abs(chi).max(), 1e-300))


# ---------------------------------------------------------------------------
# Momentum-coset bookkeeping

def _support(arrays, tol=SUPPORT_TOL) -> np.ndarray:
    """Flat indices of Fourier modes carrying weight in any of ``arrays``."""
    mask = None
    for arr in arrays:
        mag = np.abs(arr)
        top = mag.max(initial=0.0)
        if top == 0:
            continue
        m = (mag > tol * top).reshape(-1, mag.shape[-1] ** 3).any(axis=0) if mag.ndim == 4 else (mag > tol * top).ravel()
        mask = m if mask is None else (mask | m)
    if mask is None:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(mask)


def _subgroup(n: int, generators: np.ndarray) -> np.ndarray:
    """Flat indices of the subgroup of ``Z_n^3`` generated by ``generators``."""
    total = n ** 3
    members = np.zeros(1, dtype=int)
    if generators.size > total // 2:
        return np.arange(total)
    coords = lambda f: np.array(np.unravel_index(f, (n, n, n)))
    flat = lambda c: np.ravel_multi_index(tuple(np.mod(c, n)), (n, n, n))
    seen = np.zeros(total, dtype=bool)
    seen[0] = True
    for g in generators:
        if seen[g]:
            continue
        gc = coords(np.array([g]))[:, 0]
        mc = coords(members)
        new = [members]
        step = gc.copy()
        while True:
            shifted = flat(mc + step[:, None])
            if seen[shifted[0]]:
                break
            new.append(shifted)
            seen[shifted] = True
            step = step + gc
        members = np.concatenate(new)
        if members.size == total:
            break
    return np.sort(members)


def momentum_cosets(grid: Grid3, arrays) -> list:
    """Partition the momentum lattice into cosets of the subgroup generated by the support."""
    n = grid.n
    total = n ** 3
    sub = _subgroup(n, _support(arrays))
    if sub.size == total:
        return [np.arange(total)]
    sub_c = np.array(np.unravel_index(sub, (n, n, n)))
    assigned = np.zeros(total, dtype=bool)
    cosets = []
    for p in range(total):
        if assigned[p]:
            continue
        pc = np.array(np.unravel_index(p, (n, n, n)))
        members = np.ravel_multi_index(tuple(np.mod(sub_c + pc[:, None], n)), (n, n, n))
        assigned[members] = True
        cosets.append(members)
    return cosets


def _assemble_block(grid: Grid3, sites: np.ndarray, link_hat, v_hat, onsite, hops) -> np.ndarray:
    """Momentum-basis matrix of a link operator restricted to ``sites``.

    ``link_hat[mu]`` and ``v_hat`` are ``fftn(.)/N`` of the link field and of
    the on-site scalar; ``onsite`` is a constant 4x4 block (or ``None``).
    """
    n = grid.n
    s = sites.size
    pc = np.array(np.unravel_index(sites, grid.shape))
    diff = np.ravel_multi_index(tuple(np.mod(pc[:, :, None] - pc[:, None, :], n)), grid.shape)
    blk = np.zeros((s, 4, s, 4), dtype=complex)
    if link_hat is not None:
        for mu in range(3):
            lh = link_hat[mu].ravel()[diff]
            phase = np.exp(2j * np.pi * pc[mu] / n)
            fwd = lh * phase[None, :]
            bwd = np.conj(lh.T) * np.conj(phase)[:, None]
            x = hops[mu]
            blk += fwd[:, None, :, None] * x[None, :, None, :]
            blk += bwd[:, None, :, None] * x.conj().T[None, :, None, :]
    if v_hat is not None:
        vv = v_hat.ravel()[diff]
        blk += vv[:, None, :, None] * np.eye(4)[None, :, None, :]
    if onsite is not None:
        idx = np.arange(s)
        blk[idx, :, idx, :] += onsite
    return blk.reshape(4 * s, 4 * s)


def _eigh(mat: np.ndarray, vectors: bool):
    try:
        if vectors:
            return scipy.linalg.eigh(mat, driver="evr", check_finite=False, overwrite_a=False)
        return scipy.linalg.eigh(mat, eigvals_only=True, check_finite=False, overwrite_a=False)
    except (np.linalg.LinAlgError, ValueError) as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"Hermitian eigensolver failed: {exc}") from exc


# ---------------------------------------------------------------------------
# Operator

@dataclass
class LatticeDiracOperator:
    """Lattice realization of ``D_{m, eA}`` on a periodic grid.

    The dense position-basis matrix (:attr:`matrix`) orders the basis as
    ``4 * site + spin`` with sites in C order.  Spectral work goes through
    :meth:`blocks`, the momentum-basis restriction to each coset.
    """

    grid: Grid3
    mass: float
    potential: FourPotential
    coupling: float
    wilson: float = DEFAULT_WILSON
    capacity: int = DEFAULT_CAPACITY
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.grid.check_same(self.potential.grid)
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise InvalidInputError(f"mass must be positive, got {self.mass!r}")
        if not np.isfinite(self.coupling):
            raise InvalidInputError("coupling must be finite")
        if not self.wilson > 0:
            raise InvalidInputError("Wilson parameter must be positive")

    @property
    def dimension(self) -> int:
        return 4 * self.grid.size

    @property
    def theta(self) -> np.ndarray:
        if "theta" not in self._cache:
            self._cache["theta"] = link_integrals(self.potential.a)
        return self._cache["theta"]

    @property
    def links(self) -> np.ndarray:
        """Link variables ``U_mu(x)``, shape ``(3, n, n, n)``."""
        return np.exp(-1j * self.coupling * self.theta)

    def _hats(self):
        if "hats" not in self._cache:
            n3 = self.grid.size
            link_hat = np.fft.fftn(self.links, axes=(1, 2, 3)) / n3
            theta_hat = np.fft.fftn(self.theta, axes=(1, 2, 3))
            v_hat = np.fft.fftn(self.coupling * self.potential.v.values) / n3
            self._cache["hats"] = (link_hat, v_hat, theta_hat)
        return self._cache["hats"]

    def cosets(self) -> list:
        if "cosets" not in self._cache:
            link_hat, v_hat, theta_hat = self._hats()
            arrays = [theta_hat, v_hat] if self.coupling else []
            self._cache["cosets"] = momentum_cosets(self.grid, arrays)
        return self._cache["cosets"]

    def blocks(self):
        """Yield ``(sites, matrix)`` momentum-basis blocks, one per coset."""
        link_hat, v_hat, _ = self._hats()
        h = self.grid.spacing
        hops = _hop_matrices(h, self.wilson)
        onsite = _onsite(h, self.mass, self.wilson)
        for sites in self.cosets():
            if 4 * sites.size > self.capacity:
                raise CapacityError(
                    f"momentum block of dimension {4 * sites.size} exceeds the dense cap {self.capacity}")
            yield sites, _assemble_block(self.grid, sites, link_hat, v_hat, onsite, hops)

    @property
    def matrix(self) -> np.ndarray:
        """Dense Hermitian matrix in the position basis."""
        if self.dimension > self.capacity:
            raise CapacityError(f"operator dimension {self.dimension} exceeds the dense cap {self.capacity}")
        return position_matrix(self.grid, self.mass, self.links, self.coupling * self.potential.v.values,
                               self.wilson)

    def momentum_matrix(self) -> np.ndarray:
        """Dense matrix in the unitary-DFT momentum basis (all cosets assembled)."""
        if self.dimension > self.capacity:
            raise CapacityError(f"operator dimension {self.dimension} exceeds the dense cap {self.capacity}")
        n3 = self.grid.size
        out = np.zeros((n3, 4, n3, 4), dtype=complex)
        for sites, blk in self.blocks():
            s = sites.size
            out[np.ix_(sites, range(4), sites, range(4))] = blk.reshape(s, 4, s, 4)
        return out.reshape(4 * n3, 4 * n3)

    def hermiticity_defect(self) -> float:
        m = self.matrix
        return float(np.linalg.norm(m - m.conj().T) / max(np.linalg.norm(m), 1e-300))


def position_matrix(grid: Grid3, mass: float, links: np.ndarray, ev: np.ndarray,
                    wilson: float = DEFAULT_WILSON) -> np.ndarray:
    """Assemble the nearest-neighbour stencil directly in the position basis."""
    n3 = grid.size
    h = grid.spacing
    hops = _hop_matrices(h, wilson)
    sites = np.arange(n3)
    coords = np.array(np.unravel_index(sites, grid.shape))
    mat = np.zeros((n3, 4, n3, 4), dtype=complex)
    for mu in range(3):
        shifted = coords.copy()
        shifted[mu] = (shifted[mu] + 1) % grid.n
        nbr = np.ravel_multi_index(tuple(shifted), grid.shape)
        u = links[mu].ravel()
        x = hops[mu]
        np.add.at(mat, (sites, slice(None), nbr, slice(None)), u[:, None, None] * x[None])
        np.add.at(mat, (nbr, slice(None), sites, slice(None)), np.conj(u)[:, None, None] * x.conj().T[None])
    onsite = _onsite(h, mass, wilson)
    np.add.at(mat, (sites, slice(None), sites, slice(None)),
              onsite[None] + np.asarray(ev).ravel()[:, None, None] * np.eye(4)[None])
    return mat.reshape(4 * n3, 4 * n3)


def build_operator(grid: Grid3, m: float, A: FourPotential, e: float,
                   wilson: float = DEFAULT_WILSON, capacity: int = DEFAULT_CAPACITY) -> LatticeDiracOperator:
    """Assemble the lattice operator for mass ``m`` and coupling ``e``.

    Raises
    ------
    CapacityError
        If the largest momentum block exceeds ``capacity``.
    """
    op = LatticeDiracOperator(grid, float(m), A, float(e), wilson, capacity)
    largest = max(s.size for s in op.cosets())
    if 4 * largest > capacity:
        raise CapacityError(f"momentum block of dimension {4 * largest} exceeds the dense cap {capacity}")
    return op


def gauge_phase(chi: ScalarField, e: float) -> np.ndarray:
    """Diagonal of ``exp(i e chi)`` on the spinor position basis."""
    return np.repeat(np.exp(1j * e * chi.values.ravel()), 4)


# ---------------------------------------------------------------------------
# Spectra

@dataclass
class SpectralData:
    """Ascending eigenvalues and (optionally) position-basis eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None

    @property
    def gap(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def residuals(self, matrix: np.ndarray) -> np.ndarray:
        if self.eigenvectors is None:
            raise InvalidInputError("no eigenvectors stored")
        r = matrix @ self.eigenvectors - self.eigenvectors * self.eigenvalues[None, :]
        return np.linalg.norm(r, axis=0)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["index,eigenvalue"] + [f"{i},{v!r}" for i, v in enumerate(self.eigenvalues.tolist())]
        path.write_text("\n".join(lines) + "\n")
        return path


def spectrum(op: LatticeDiracOperator, vectors: bool = False) -> SpectralData:
    """Full spectrum of ``op``; with ``vectors=True`` the dense position matrix is diagonalized."""
    if vectors:
        vals, vecs = _eigh(op.matrix, True)
        return SpectralData(vals, vecs)
    vals = np.concatenate([_eigh(blk, False) for _, blk in op.blocks()])
    return SpectralData(np.sort(vals))


def free_spectrum(grid: Grid3, mass: float, wilson: float = DEFAULT_WILSON) -> np.ndarray:
    """Sorted free eigenvalues ``+-E(p)``, each with multiplicity two."""
    e = free_dispersion(grid, mass, wilson).ravel()
    return np.sort(np.concatenate([e, e, -e, -e]))


# ---------------------------------------------------------------------------
# PV energy and vacuum densities

def _check_scheme_grid(scheme: PVScheme, grid: Grid3, A: FourPotential):
    if not isinstance(scheme, PVScheme):
        raise InvalidInputError("scheme must be a PVScheme")
    grid.check_same(A.grid)


def pv_energy(scheme: PVScheme, grid: Grid3, A: FourPotential, e: float,
              wilson: float = DEFAULT_WILSON, capacity: int = DEFAULT_CAPACITY) -> float:
    """``F_PV = 1/2 sum_j c_j (tr|D_{m_j,0}| - tr|D_{m_j,eA}|)``.

    The free traces are the closed-form sums ``4 sum_p E_j(p)``; the
    interacting ones are eigenvalue sums over momentum blocks.  Subtraction is
    done block by block to limit cancellation.
    """
    _check_scheme_grid(scheme, grid, A)
    total = 0.0
    for c, m in scheme.terms():
        op = build_operator(grid, m, A, e, wilson, capacity)
        free = free_dispersion(grid, m, wilson).ravel()
        acc = 0.0
        for sites, blk in op.blocks():
            acc += 4.0 * np.sum(free[sites]) - np.sum(np.abs(_eigh(blk, False)))
        total += 0.5 * c * acc
    return float(total)


@dataclass
class VacuumState:
    """PV-weighted negative spectral projector and the densities it induces.

    ``q_blocks`` holds ``(sites, Q)`` pairs in the momentum basis; ``energy``
    is ``F_PV`` from the same eigenvalues; ``gaps`` maps each mass to the
    smallest ``|eigenvalue|`` found.
    """

    scheme: PVScheme
    potential: FourPotential
    coupling: float
    rho: ScalarField
    current: VectorField
    energy: float
    gaps: dict
    q_blocks: list | None = None

    def q_matrix(self) -> np.ndarray:
        """Dense ``Q`` in the position basis (assembled from the momentum blocks)."""
        if self.q_blocks is None:
            raise InvalidInputError("projector blocks were not retained")
        grid = self.potential.grid
        n3 = grid.size
        qm = np.zeros((n3, 4, n3, 4), dtype=complex)
        for sites, q in self.q_blocks:
            s = sites.size
            qm[np.ix_(sites, range(4), sites, range(4))] = q.reshape(s, 4, s, 4)
        qm = qm.reshape(4 * n3, 4 * n3)
        f = _dft_spinor(grid)
        return f.conj().T @ qm @ f

    def hermiticity_defect(self) -> float:
        worst = 0.0
        for _, q in self.q_blocks or []:
            worst = max(worst, float(np.linalg.norm(q - q.conj().T) / max(np.linalg.norm(q), 1e-300)))
        return worst


def _dft_spinor(grid: Grid3) -> np.ndarray:
    """Unitary DFT on sites tensored with the spin identity (momentum = F @ position)."""
    f1 = np.fft.fft(np.eye(grid.n), norm="ortho")
    f3 = np.kron(np.kron(f1, f1), f1)
    return np.kron(f3, np.eye(4))


def vacuum_state(scheme: PVScheme, grid: Grid3, A: FourPotential, e: float,
                 wilson: float = DEFAULT_WILSON, capacity: int = DEFAULT_CAPACITY,
                 keep_projector: bool = False, gap_tol: float = GAP_TOL) -> VacuumState:
    """Vacuum projector ``Q = sum_j c_j P^-_j`` with its density and current.

    The density is ``rho(x) = tr_4 Q(x, x) / h^3``.  The current is the
    derivative of the energy with respect to ``A``: with
    ``g_mu(x) = 2 Im[U_mu(x) tr(X_mu Q(x + mu, x))]`` one has
    ``dF = e sum_x dtheta_mu(x) g_mu(x)``, and pulling ``dtheta`` back to
    ``dA`` through the link integral gives ``j_mu = -(link^T g_mu) / h^3``.

    Raises
    ------
    DegenerateVacuumError
        If any ``D_{m_j, eA}`` has an eigenvalue within ``gap_tol`` of zero.
    """
    _check_scheme_grid(scheme, grid, A)
    n3 = grid.size
    h = grid.spacing
    ops = [(c, build_operator(grid, m, A, e, wilson, capacity)) for c, m in scheme.terms()]
    hops = _hop_matrices(h, wilson)
    r0 = np.zeros(n3, dtype=complex)
    rmu = np.zeros((3, n3), dtype=complex)
    gaps = {m: np.inf for m in scheme.mass_array.tolist()}
    energy = 0.0
    kept = [] if keep_projector else None
    cosets = ops[0][1].cosets()
    block_iters = [op.blocks() for _, op in ops]
    frees = [free_dispersion(grid, op.mass, wilson).ravel() for _, op in ops]
    for ci, sites in enumerate(cosets):
        s = sites.size
        q = np.zeros((4 * s, 4 * s), dtype=complex)
        for (c, op), it, free in zip(ops, block_iters, frees):
            sites_j, blk = next(it)
            vals, vecs = _eigh(blk, True)
            gap = float(np.min(np.abs(vals)))
            gaps[op.mass] = min(gaps[op.mass], gap)
            if gap <= gap_tol:
                raise DegenerateVacuumError(
                    f"D has an eigenvalue {gap:.3e} within {gap_tol:g} of zero for mass {op.mass}",
                    mass=op.mass, min_abs_eigenvalue=gap)
            energy += 0.5 * c * (4.0 * np.sum(free[sites]) - np.sum(np.abs(vals)))
            neg = vecs[:, vals < 0]
            q += c * (neg @ neg.conj().T)
        if kept is not None:
            kept.append((sites, q))
        q4 = q.reshape(s, 4, s, 4)
        pc = np.array(np.unravel_index(sites, grid.shape))
        diff = np.ravel_multi_index(tuple(np.mod(pc[:, :, None] - pc[:, None, :], grid.n)), grid.shape)
        np.add.at(r0, diff.ravel(), np.einsum("iaja->ij", q4).ravel())
        for mu in range(3):
            phase = np.exp(2j * np.pi * pc[mu] / grid.n)
            tx = np.einsum("ab,ibja->ij", hops[mu], q4) * phase[:, None]
            np.add.at(rmu[mu], diff.ravel(), tx.ravel())
    r0 = r0.reshape(grid.shape)
    rmu = rmu.reshape((3,) + grid.shape)
    rho = ScalarField(grid, np.fft.ifftn(r0).real / h ** 3)
    y = np.fft.ifftn(rmu, axes=(1, 2, 3))
    op0 = ops[0][1]
    g = 2.0 * np.imag(op0.links * y)
    j_vals = -_link_transpose(grid, g) / h ** 3
    current = VectorField(grid, j_vals)
    return VacuumState(scheme, A, float(e), rho, current, float(energy), gaps, kept)


def density_pairing(state: VacuumState, delta: FourPotential) -> float:
    """``e h^3 sum_x (rho dV - j . dA)``: predicted directional derivative of ``F_PV``."""
    grid = delta.grid
    return float(state.coupling * grid.cell_volume *
                 (np.sum(state.rho.values * delta.v.values) - np.sum(state.current.values * delta.a.values)))


# ---------------------------------------------------------------------------
# Charge conjugation

@dataclass
class ChargeConjugationReport:
    """Matrix and spectral defects of ``C D_{eA} C^-1 = -D_{-eA}``."""

    matrix_defect: float
    spectrum_defect: float
    passed: bool


def charge_conjugation_check(op: LatticeDiracOperator, tol: float = 1e-12,
                             spectral_tol: float = 1e-10) -> ChargeConjugationReport:
    """Apply ``C = i beta alpha_2`` with complex conjugation site by site."""
    d = dirac_matrices()
    uc = d.charge_conjugation_matrix()
    big = np.kron(np.eye(op.grid.size), uc)
    mat = op.matrix
    conj = big @ mat.conj() @ big.conj().T
    flipped = LatticeDiracOperator(op.grid, op.mass, -op.potential, op.coupling, op.wilson, op.capacity)
    target = -flipped.matrix
    defect = float(np.linalg.norm(conj - target) / max(np.linalg.norm(mat), 1e-300))
    ev = _eigh(mat, False)
    ev_flip = np.sort(-_eigh(flipped.matrix, False))
    sdef = float(np.max(np.abs(ev - ev_flip)))
    return ChargeConjugationReport(defect, sdef, defect <= tol and sdef <= spectral_tol)


# ---------------------------------------------------------------------------
# Second-order response

def _perturbation_blocks(grid, sites, base_links, theta_dir, v_dir, e, hops, n3):
    """First and (half) second derivative blocks of ``D`` along a direction."""
    w1_link = np.fft.fftn(-1j * e * theta_dir * base_links, axes=(1, 2, 3)) / n3
    w2_link = np.fft.fftn(-0.5 * e ** 2 * theta_dir ** 2 * base_links, axes=(1, 2, 3)) / n3
    v1 = np.fft.fftn(e * v_dir) / n3
    w1 = _assemble_block(grid, sites, w1_link, v1, None, hops)
    w2 = _assemble_block(grid, sites, w2_link, None, None, hops)
    return w1, w2


def analytic_hessian(scheme: PVScheme, grid: Grid3, direction: FourPotential, e: float,
                     base: FourPotential | None = None, wilson: float = DEFAULT_WILSON,
                     capacity: int = DEFAULT_CAPACITY) -> float:
    """Second derivative of ``eps -> F_PV(e (base + eps * direction))`` at ``eps = 0``.

    Second-order perturbation theory for ``tr|D|``: with ``D(eps) = D + eps W1
    + eps^2 W2 + ...`` in the eigenbasis of ``D``,

        d^2 tr|D| = sum_{i: l_i > 0, j: l_j < 0} 4 |W1_ij|^2 / (l_i - l_j) + 2 tr(sign(D) W2).
    """
    base = FourPotential.zeros(grid) if base is None else base
    theta_dir = link_integrals(direction.a)
    n3 = grid.size
    hops = _hop_matrices(grid.spacing, wilson)
    total = 0.0
    for c, m in scheme.terms():
        op = LatticeDiracOperator(grid, float(m), base, float(e), wilson, capacity)
        link_hat, v_hat, theta_hat = op._hats()
        th_dir_hat = np.fft.fftn(theta_dir, axes=(1, 2, 3))
        v_dir_hat = np.fft.fftn(direction.v.values)
        cosets = momentum_cosets(grid, [theta_hat, v_hat, th_dir_hat, v_dir_hat])
        onsite = _onsite(grid.spacing, m, wilson)
        d2 = 0.0
        for sites in cosets:
            if 4 * sites.size > capacity:
                raise CapacityError(f"momentum block of dimension {4 * sites.size} exceeds the dense cap {capacity}")
            blk = _assemble_block(grid, sites, link_hat, v_hat, onsite, hops)
            w1, w2 = _perturbation_blocks(grid, sites, op.links, theta_dir, direction.v.values, e, hops, n3)
            vals, vecs = _eigh(blk, True)
            pos, neg = vals > 0, vals < 0
            w1e = vecs.conj().T @ w1 @ vecs
            denom = vals[pos][:, None] - vals[neg][None, :]
            d2 += 4.0 * np.sum(np.abs(w1e[np.ix_(pos, neg)]) ** 2 / denom)
            w2d = np.real(np.einsum("ij,ji->i", vecs.conj().T, w2 @ vecs))
            d2 += 2.0 * np.sum(np.sign(vals) * w2d)
        total += -0.5 * c * d2
    return float(total)


def oracle_link_integrals(a: VectorField, nodes: int = 24) -> np.ndarray:
    """Link integrals by Gauss-Legendre quadrature of the trigonometric interpolant.

    Independent of :func:`link_integrals`: the interpolant along each axis is
    summed mode by mode at the quadrature nodes, with the Nyquist mode
    represented by ``cos(pi x / h)``.
    """
    grid = a.grid
    n, h = grid.n, grid.spacing
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * h * (x + 1.0)
    w = 0.5 * h * w
    kint = np.fft.fftfreq(n, d=1.0 / n)
    out = np.empty((3,) + grid.shape)
    for mu in range(3):
        coeff = np.fft.fft(a.values[mu], axis=mu) / n
        coeff = np.moveaxis(coeff, mu, -1)
        acc = np.zeros(coeff.shape[:-1] + (n,))
        xs = np.arange(n)[:, None] * h + s[None, :]
        for idx, kk in enumerate(kint):
            kphys = 2 * np.pi * kk / grid.box_length
            if n % 2 == 0 and idx == n // 2:
                basis = np.cos(np.pi * xs / h)
            else:
                basis = np.exp(1j * kphys * xs)
            integ = basis @ w
            acc = acc + np.real(coeff[..., idx:idx + 1] * integ)
        out[mu] = np.moveaxis(acc, -1, mu)
    return out


def oracle_pv_energy(scheme: PVScheme, grid: Grid3, A: FourPotential, e: float,
                     wilson: float = DEFAULT_WILSON, free_traces: dict | None = None) -> float:
    """``F_PV`` from dense position-basis eigenvalues with quadrature link phases."""
    theta = oracle_link_integrals(A.a)
    links = np.exp(-1j * e * theta)
    ev = e * A.v.values
    total = 0.0
    for c, m in scheme.terms():
        if free_traces is not None and m in free_traces:
            free = free_traces[m]
        else:
            free = float(np.sum(np.abs(_eigh(position_matrix(grid, m, np.ones((3,) + grid.shape), np.zeros(grid.shape),
                                                              wilson), False))))
            if free_traces is not None:
                free_traces[m] = free
        vals = _eigh(position_matrix(grid, m, links, ev, wilson), False)
        total += 0.5 * c * (free - np.sum(np.abs(vals)))
    return float(total)


@dataclass
class QuadraticResponse:
    """Hessian of ``eps -> F_PV(eps e delta)`` at zero from three routes."""

    fd_hessian: float
    oracle_hessian: float
    f2_prediction: float
    analytic_hessian: float
    first_derivative: float
    step: float

    def as_tuple(self) -> tuple:
        return (self.fd_hessian, self.oracle_hessian, self.f2_prediction)

    @property
    def fd_vs_oracle(self) -> float:
        return abs(self.fd_hessian - self.oracle_hessian) / abs(self.oracle_hessian)

    @property
    def fd_vs_f2(self) -> float:
        return (self.fd_hessian - self.f2_prediction) / self.f2_prediction


def fd_hessian(energy, step: float) -> tuple:
    """Richardson-extrapolated second central difference of ``energy`` at zero.

    Returns ``(hessian, first_derivative)``; ``energy(0)`` is taken as zero.
    """
    fp, fm = energy(step), energy(-step)
    fp2, fm2 = energy(step / 2), energy(-step / 2)
    d_h = (fp + fm) / step ** 2
    d_h2 = (fp2 + fm2) / (step / 2) ** 2
    first = (fp2 - fm2) / step
    return (4 * d_h2 - d_h) / 3, first


def quadratic_response(scheme: PVScheme, grid: Grid3, direction: FourPotential, e: float,
                       step: float = FD_STEP, wilson: float = DEFAULT_WILSON,
                       capacity: int = DEFAULT_CAPACITY, oracle: bool = True) -> QuadraticResponse:
    """Compare finite-difference, oracle and continuum values of the Hessian.

    Parameters
    ----------
    direction : FourPotential
        Perturbation ``delta``; ``step`` is interpreted relative to its
        Sobolev norm, so unnormalized directions are accepted.
    step : float
        Base step in units of the perturbation size ``e * ||delta||``
        (halved once for Richardson).
        The oracle uses the five-point stencil at ``+-step, +-2 step``.
    oracle : bool
        Skip the dense oracle (it needs the full ``4 n^3`` matrix) when False.
    """
    norm = field_norms(direction)[0]
    if norm == 0:
        raise InvalidInputError("direction must be non-zero")
    hstep = step / (norm * (abs(e) if e else 1.0))

    def f_blocks(eps):
        if eps == 0:
            return 0.0
        return pv_energy(scheme, grid, direction * eps, e, wilson, capacity)

    hess, first = fd_hessian(f_blocks, hstep)
    f2 = 2.0 * e ** 2 * f2_energy(direction.fields(), scheme)
    ana = analytic_hessian(scheme, grid, direction, e, wilson=wilson, capacity=capacity)
    orc = np.nan
    if oracle:
        cache: dict = {}
        fo = lambda eps: oracle_pv_energy(scheme, grid, direction * eps, e, wilson, cache)
        orc = (-fo(2 * hstep) + 16 * fo(hstep) + 16 * fo(-hstep) - fo(-2 * hstep)) / (12 * hstep ** 2)
    return QuadraticResponse(float(hess), float(orc), float(f2), ana, float(first), hstep)


@dataclass
class RemainderReport:
    """Beyond-quadratic remainder ``R(eps) = F(eps) - eps^2 H / 2`` and its fitted order."""

    epsilons: np.ndarray
    remainders: np.ndarray
    exponent: float
    quadratic_coefficient: float
    evenness_defect: float


def remainder_scaling(scheme: PVScheme, grid: Grid3, direction: FourPotential, e: float,
                      eps0: float = 0.5, wilson: float = DEFAULT_WILSON,
                      capacity: int = DEFAULT_CAPACITY) -> RemainderReport:
    """Fit the order of ``R(eps)`` over ``eps0, eps0/2, eps0/4``.

    The quadratic part is the lattice's own second derivative at zero, taken
    from :func:`analytic_hessian`, so that ``R`` contains no second-order
    residue from discretization.  ``eps`` multiplies ``direction`` as given.
    """
    hess = analytic_hessian(scheme, grid, direction, e, wilson=wilson, capacity=capacity)
    eps = np.array([eps0, eps0 / 2, eps0 / 4])
    rem = np.array([pv_energy(scheme, grid, direction * x, e, wilson, capacity) - 0.5 * hess * x ** 2
                    for x in eps])
    rem_neg = pv_energy(scheme, grid, direction * (-eps0), e, wilson, capacity) - 0.5 * hess * eps0 ** 2
    slope = np.polyfit(np.log(eps), np.log(np.abs(rem)), 1)[0]
    even = abs(rem_neg - rem[0]) / max(abs(rem[0]), 1e-300)
    return RemainderReport(eps, rem, float(slope), hess, float(even))
