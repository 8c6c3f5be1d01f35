"""Numerical variationality tests for second-order systems.

Whether an explicit second-order system is the Euler-Lagrange flow of some
regular Lagrangian is decided by the existence of a symmetric nonsingular
multiplier matrix field coupling the system to an Euler-Lagrange expression.
This module evaluates the full condition list for a concrete candidate
(residual maxima over sample points) and, independently, solves the
pointwise algebraic conditions for the space of symmetric multipliers,
probing that space for nonsingular members.

Tensor conventions at a phase point, with J_v and J_q the velocity and
position Jacobians of the acceleration f and Gamma the derivative along the
flow direction (v, f):

    nabla     = -J_v / 2
    phi       = Gamma(J_v) - 2 J_q - J_v @ J_v / 2
    nabla_phi = Gamma(phi) - nabla @ phi - phi @ nabla
    curvature[i][j][k] = d phi[i][j] / dv[k] - d phi[i][k] / dv[j]

The curvature tensor is the antisymmetrized velocity derivative of phi; its
cyclic contraction with a multiplier must vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dualnum as dm
from .model import SecondOrderSystem


def _mat_mul(a, b):
    n = len(a)
    return [[sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)]
            for i in range(n)]


def _phi_generic(sode: SecondOrderSystem, q, v):
    jv = sode.jac_v(q, v)
    jq = sode.jac_q(q, v)
    gamma_jv = sode.gamma(lambda qq, vv: sode.jac_v(qq, vv), q, v)
    jv2 = _mat_mul(jv, jv)
    n = sode.n
    return [[gamma_jv[i][j] - 2.0 * jq[i][j] - 0.5 * jv2[i][j]
             for j in range(n)] for i in range(n)]


def _nabla_generic(sode: SecondOrderSystem, q, v):
    jv = sode.jac_v(q, v)
    return [[-0.5 * x for x in row] for row in jv]


def _nabla_phi_generic(sode: SecondOrderSystem, q, v):
    nabla = _nabla_generic(sode, q, v)
    phi = _phi_generic(sode, q, v)
    gamma_phi = sode.gamma(lambda qq, vv: _phi_generic(sode, qq, vv), q, v)
    a = _mat_mul(nabla, phi)
    b = _mat_mul(phi, nabla)
    n = sode.n
    return [[gamma_phi[i][j] - a[i][j] - b[i][j] for j in range(n)]
            for i in range(n)]


def _curvature(sode: SecondOrderSystem, q, v) -> np.ndarray:
    """curvature[i][j][k] = d phi[i][j]/dv[k] - d phi[i][k]/dv[j] (floats)."""
    dphi = dm.partials(lambda vv: _phi_generic(sode, q, vv), list(v))
    n = sode.n
    out = np.empty((n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                out[i, j, k] = dm.real(dphi[k][i][j]) - dm.real(dphi[j][i][k])
    return out


def _to_np(mat) -> np.ndarray:
    return np.array([[dm.real(x) for x in row] for row in mat], dtype=float)


@dataclass(frozen=True)
class HelmholtzTensors:
    nabla: np.ndarray
    phi: np.ndarray
    nabla_phi: np.ndarray
    curvature: np.ndarray


def helmholtz_tensors(sode: SecondOrderSystem, q, v) -> HelmholtzTensors:
    q = [float(x) for x in q]
    v = [float(x) for x in v]
    return HelmholtzTensors(
        nabla=_to_np(_nabla_generic(sode, q, v)),
        phi=_to_np(_phi_generic(sode, q, v)),
        nabla_phi=_to_np(_nabla_phi_generic(sode, q, v)),
        curvature=_curvature(sode, q, v),
    )


class MultiplierCandidate:
    """Symmetric matrix field g(q, v) proposed as a multiplier.

    ``differentiable`` means the evaluator is dual-safe, so the flow
    derivative and velocity derivatives exist; without it the two
    derivative-based conditions are skipped.
    """

    def __init__(self, matrix, label: str = "", differentiable: bool = True):
        self.matrix = matrix
        self.label = label
        self.differentiable = differentiable


def hessian_candidate(free_lagrangian) -> MultiplierCandidate:
    """Velocity Hessian of a free Lagrangian (the canonical multiplier)."""
    return MultiplierCandidate(
        lambda q, v: free_lagrangian.hess_v(q, v),
        label=f"hessian[{free_lagrangian.kind}:{free_lagrangian.system.name}]",
    )


def constant_candidate(mat, label: str = "constant") -> MultiplierCandidate:
    rows = [list(r) for r in mat]
    return MultiplierCandidate(lambda q, v: rows, label=label)


CONDITIONS = (
    "symmetry",
    "dv_symmetry",
    "nabla",
    "phi",
    "nabla_phi",
    "curvature_cyclic",
)


@dataclass
class HelmholtzReport:
    """Residual maxima over the sampled points, one entry per condition;
    None marks a condition that was skipped for lack of derivatives."""

    residuals: dict
    min_abs_det: float
    tolerance: float
    n_points: int

    def passed(self, name: str) -> bool:
        r = self.residuals[name]
        return r is not None and r <= self.tolerance

    def all_passed(self) -> bool:
        return all(r is None or r <= self.tolerance for r in self.residuals.values()) \
            and self.min_abs_det > 0.0


def multiplier_residuals(sode: SecondOrderSystem, candidate: MultiplierCandidate,
                         points, tol: float = 1e-8) -> HelmholtzReport:
    """Evaluate every condition residual for the candidate at the points."""
    worst = {name: 0.0 for name in CONDITIONS}
    if not candidate.differentiable:
        worst["dv_symmetry"] = None
        worst["nabla"] = None
    min_det = math.inf
    n = sode.n
    count = 0
    for q, v in points:
        q = [float(x) for x in q]
        v = [float(x) for x in v]
        g = _to_np(candidate.matrix(q, v))
        nabla = _to_np(_nabla_generic(sode, q, v))
        phi = _to_np(_phi_generic(sode, q, v))
        nphi = _to_np(_nabla_phi_generic(sode, q, v))
        curv = _curvature(sode, q, v)

        worst["symmetry"] = max(worst["symmetry"], float(np.abs(g - g.T).max()))
        gp = g @ phi
        worst["phi"] = max(worst["phi"], float(np.abs(gp - gp.T).max()))
        gnp = g @ nphi
        worst["nabla_phi"] = max(worst["nabla_phi"], float(np.abs(gnp - gnp.T).max()))
        cyc = (np.einsum("ij,jkl->ikl", g, curv)
               + np.einsum("lj,jik->ikl", g, curv)
               + np.einsum("kj,jli->ikl", g, curv))
        worst["curvature_cyclic"] = max(worst["curvature_cyclic"],
                                        float(np.abs(cyc).max()))
        if candidate.differentiable:
            gamma_g = _to_np(sode.gamma(candidate.matrix, q, v))
            res = gamma_g - g @ nabla - nabla.T @ g
            worst["nabla"] = max(worst["nabla"], float(np.abs(res).max()))
            dgdv = dm.partials(lambda vv: candidate.matrix(q, vv), v)
            t = np.array([[[dm.real(dgdv[k][i][j]) for k in range(n)]
                           for j in range(n)] for i in range(n)])
            # t[i][j][k] = dg_ij / dv_k must be symmetric in (j, k)
            worst["dv_symmetry"] = max(worst["dv_symmetry"],
                                       float(np.abs(t - t.transpose(0, 2, 1)).max()))
        min_det = min(min_det, abs(float(np.linalg.det(g))))
        count += 1
    if count == 0:
        raise ValueError("no sample points supplied")
    return HelmholtzReport(worst, min_det, tol, count)


# -- pointwise multiplier space ------------------------------------------------

def _sym_pairs(n: int):
    return [(a, b) for a in range(n) for b in range(a, n)]


def _basis_matrix(n: int, a: int, b: int) -> np.ndarray:
    e = np.zeros((n, n))
    if a == b:
        e[a, a] = 1.0
    else:
        val = 1.0 / math.sqrt(2.0)
        e[a, b] = val
        e[b, a] = val
    return e


def sym_vectorize(mat: np.ndarray) -> np.ndarray:
    """Coordinates in the orthonormal symmetric basis (Frobenius isometry)."""
    n = mat.shape[0]
    m = 0.5 * (mat + mat.T)
    return np.array([m[a, a] if a == b else math.sqrt(2.0) * m[a, b]
                     for a, b in _sym_pairs(n)])


def sym_unvectorize(vec: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    for coord, (a, b) in zip(vec, _sym_pairs(n)):
        if a == b:
            out[a, a] = coord
        else:
            out[a, b] = out[b, a] = coord / math.sqrt(2.0)
    return out


def _condition_rows(g: np.ndarray, phi, nphi, curv, depth: int):
    """Values of every depth-d algebraic condition applied to one matrix."""
    n = g.shape[0]
    rows = []
    gp = g @ phi
    rows.extend(gp[i, j] - gp[j, i] for i in range(n) for j in range(i + 1, n))
    if depth >= 2:
        gq = g @ nphi
        rows.extend(gq[i, j] - gq[j, i] for i in range(n) for j in range(i + 1, n))
    if depth >= 3:
        cyc = (np.einsum("ij,jkl->ikl", g, curv)
               + np.einsum("lj,jik->ikl", g, curv)
               + np.einsum("kj,jli->ikl", g, curv))
        rows.extend(cyc[i, k, l] for i in range(n)
                    for k in range(n) for l in range(k + 1, n))
    return rows


@dataclass
class MultiplierSpace:
    """Nullspace of the pointwise algebraic conditions in the symmetric
    unknowns, with a randomized nonsingularity probe over its span."""

    basis: list
    dimension: int
    nonsingular_found: bool
    max_abs_det: float
    witness: np.ndarray | None
    _null_vectors: np.ndarray

    def projection_residual(self, mat: np.ndarray) -> float:
        """Relative distance of a symmetric matrix from the span."""
        vec = sym_vectorize(np.asarray(mat, dtype=float))
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return 0.0
        if self.dimension == 0:
            return 1.0
        coeffs = self._null_vectors @ vec
        return float(np.linalg.norm(vec - self._null_vectors.T @ coeffs)) / norm


def algebraic_multiplier_space(sode: SecondOrderSystem, q, v, depth: int,
                               probes: int = 200, seed: int = 0,
                               svd_rtol: float = 1e-10,
                               det_tol: float = 1e-8) -> MultiplierSpace:
    """Solve the pointwise algebraic conditions up to ``depth`` and probe
    the solution space for nonsingular members.

    Depth 1 imposes the phi condition, 2 adds the nabla_phi condition, 3 the
    cyclic curvature condition.  The determinant is a polynomial on the
    span, so if ``probes`` random normalized members all have |det| below
    ``det_tol`` the span is (numerically) made of singular matrices only.
    """
    if depth not in (1, 2, 3):
        raise ValueError(f"depth must be 1, 2 or 3, got {depth!r}")
    q = [float(x) for x in q]
    v = [float(x) for x in v]
    n = sode.n
    phi = _to_np(_phi_generic(sode, q, v))
    nphi = _to_np(_nabla_phi_generic(sode, q, v)) if depth >= 2 else None
    curv = _curvature(sode, q, v) if depth >= 3 else None

    pairs = _sym_pairs(n)
    columns = []
    for a, b in pairs:
        columns.append(_condition_rows(_basis_matrix(n, a, b), phi, nphi, curv, depth))
    m = np.array(columns, dtype=float).T  # equations x unknowns
    if m.size == 0:
        null_vectors = np.eye(len(pairs))
    else:
        _, s, vt = np.linalg.svd(m, full_matrices=True)
        smax = s.max() if len(s) else 0.0
        rank = int(np.sum(s > svd_rtol * smax)) if smax > 0.0 else 0
        null_vectors = vt[rank:]
    dim = null_vectors.shape[0]
    basis = [sym_unvectorize(row, n) for row in null_vectors]

    rng = np.random.default_rng(seed)
    max_det = 0.0
    witness = None
    if dim > 0:
        for _ in range(probes):
            coeff = rng.standard_normal(dim)
            g = sum(c * b for c, b in zip(coeff, basis))
            norm = float(np.linalg.norm(g))
            if norm == 0.0:
                continue
            g = g / norm
            d = abs(float(np.linalg.det(g)))
            if d > max_det:
                max_det = d
                witness = g
    found = max_det > det_tol
    return MultiplierSpace(basis, dim, found, max_det,
                           witness if found else None, null_vectors)
