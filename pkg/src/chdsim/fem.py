"""P1 finite-element assembly on adaptive triangle meshes.

All inner products marked lumped use the vertex quadrature
(f, g)_h = sum_o |o|/3 sum_{v in o} f(v) g(v), which is what the scheme
prescribes for every nonlinearity; gradients of P1 functions are constant
per triangle so stiffness-type integrals are exact.  A FemContext caches
the geometry, the scalar operators and the element-to-nonzero map used for
fast reassembly of the phase-dependent mobility blocks.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import physics


class FemContext:
    """Per-mesh cache of geometry and assembly scaffolding."""

    def __init__(self, mesh):
        self.mesh = mesh
        tris = mesh.triangles
        pts = mesh.vertices
        self.n_vertices = mesh.n_vertices
        e1 = pts[tris[:, 1]] - pts[tris[:, 0]]
        e2 = pts[tris[:, 2]] - pts[tris[:, 0]]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.areas = 0.5 * det
        if np.any(self.areas <= 0):
            raise ValueError("mesh contains non-positively oriented triangles")
        # grads[t, k] = gradient of the P1 basis of vertex k on triangle t
        g = np.empty((len(tris), 3, 2))
        inv = 1.0 / det
        g[:, 1, 0] = e2[:, 1] * inv
        g[:, 1, 1] = -e2[:, 0] * inv
        g[:, 2, 0] = -e1[:, 1] * inv
        g[:, 2, 1] = e1[:, 0] * inv
        g[:, 0] = -g[:, 1] - g[:, 2]
        self.grads = g
        self.lumped = np.bincount(
            tris.ravel(),
            weights=np.repeat(self.areas / 3.0, 3),
            minlength=self.n_vertices)
        # scalar element stiffness s[t, i, j] = |o| grad_i . grad_j
        self.elem_stiff = self.areas[:, None, None] * np.einsum(
            "tid,tjd->tij", g, g)
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        a = sp.coo_matrix(
            (self.elem_stiff.ravel(), (rows, cols)),
            shape=(self.n_vertices, self.n_vertices)).tocsr()
        a.sum_duplicates()
        a.sort_indices()
        self.stiffness = a
        # map element-local (i, j) pairs into the CSR nonzero array
        nnz_rows = np.repeat(np.arange(self.n_vertices), np.diff(a.indptr))
        keys = nnz_rows * self.n_vertices + a.indices
        queries = rows.astype(np.int64) * self.n_vertices + cols
        self.elem2nnz = np.searchsorted(keys, queries).reshape(len(tris), 3, 3)
        self._nnz_keys = keys

    def lumped_inner(self, f, g):
        """(f, g)_h; accepts (nv,) or (nv, k) arrays."""
        prod = np.asarray(f) * np.asarray(g)
        if prod.ndim == 1:
            return float(self.lumped @ prod)
        return float(self.lumped @ prod.sum(axis=-1))


def lumped_mass(mesh):
    """One positive weight per vertex; weights partition the domain area."""
    return FemContext(mesh).lumped


def stiffness(mesh):
    """Scalar Laplacian matrix: entry (i,j) = integral grad chi_i . grad chi_j."""
    return FemContext(mesh).stiffness


def mobility_stiffness(ctx, phi, delta=1e-6):
    """Blocked operator (C(phi) grad mu, grad eta) on the stiffness pattern.

    The mobility tensor is evaluated at the arithmetic mean of the three
    vertex values of phi on each triangle, so every 3x3 block inherits zero
    row sums and the whole operator is symmetric positive semidefinite.
    Returns blocks (nnz, 3, 3) aligned with ctx.stiffness.
    """
    phi_mean = np.asarray(phi)[ctx.mesh.triangles].mean(axis=1)
    c_elem = physics.mobility(phi_mean, delta)
    return mobility_blocks(ctx, c_elem)


def mobility_blocks(ctx, c_elem):
    """Assemble per-element 3x3 coefficient tensors into pattern-aligned blocks."""
    nnz = len(ctx.stiffness.data)
    blocks = np.zeros((nnz, 3, 3))
    idx = ctx.elem2nnz.ravel()
    s = ctx.elem_stiff.ravel()
    for a in range(3):
        for b in range(3):
            blocks[:, a, b] = np.bincount(
                idx, weights=s * np.repeat(c_elem[:, a, b], 9), minlength=nnz)
    return blocks


def blocks_to_matrix(ctx, blocks):
    """Expand pattern-aligned 3x3 blocks to a 3nv x 3nv CSR (dof = 3*v + i)."""
    a = ctx.stiffness
    nv = ctx.n_vertices
    coo = a.tocoo()
    nnz = len(coo.row)
    rows = np.broadcast_to(
        3 * coo.row[:, None, None] + np.arange(3)[None, :, None], (nnz, 3, 3))
    cols = np.broadcast_to(
        3 * coo.col[:, None, None] + np.arange(3)[None, None, :], (nnz, 3, 3))
    return sp.coo_matrix(
        (blocks.ravel(), (rows.ravel(), cols.ravel())),
        shape=(3 * nv, 3 * nv)).tocsr()


def convection_rhs(ctx, phi, mu, p, sigma, K, chi_phi):
    """Explicit Darcy-transport load for the phase system, (nv, 3).

    Per triangle with constant gradients G = grad phi (3x2) and g_p = grad p,
    each vertex v contributes |o|/3 * K * G (g_p - G^T (mu(v) + (0, chi_phi
    sigma(v), 0))) to its own load row (vertex quadrature on the potentials).
    """
    nv = ctx.n_vertices
    load = np.zeros((nv, 3))
    if K == 0.0:
        return load
    tris = ctx.mesh.triangles
    phi_e = np.asarray(phi)[tris]            # (nt, 3 vert, 3 comp)
    grad_phi = np.einsum("tkc,tkd->tcd", phi_e, ctx.grads)
    grad_p = np.einsum("tk,tkd->td", np.asarray(p)[tris], ctx.grads)
    m = np.asarray(mu)[tris].copy()          # mu - N_phi(sigma) at vertices
    m[:, :, 1] += chi_phi * np.asarray(sigma)[tris]
    inner = grad_p[:, None, :] - np.einsum("tcd,tkc->tkd", grad_phi, m)
    vec = np.einsum("tcd,tkd->tkc", grad_phi, inner)
    w = (K / 3.0) * ctx.areas
    np.add.at(load, tris, w[:, None, None] * vec)
    return load


def nutrient_convection_rhs(ctx, sigma, p, phi, mu, K, chi_phi):
    """Explicit Darcy-transport load for the nutrient equation, (nv,).

    Per triangle each vertex v contributes |o|/3 * K * grad sigma . (grad p
    - (grad phi)^T (mu(v) + (0, chi_phi sigma(v), 0))); the concentration
    and pressure gradients are previous-step data while the phase gradient
    and potentials are current, matching the scheme's stated time levels.
    """
    nv = ctx.n_vertices
    load = np.zeros(nv)
    if K == 0.0:
        return load
    tris = ctx.mesh.triangles
    grad_sig = np.einsum("tk,tkd->td", np.asarray(sigma)[tris], ctx.grads)
    grad_p = np.einsum("tk,tkd->td", np.asarray(p)[tris], ctx.grads)
    grad_phi = np.einsum("tkc,tkd->tcd", np.asarray(phi)[tris], ctx.grads)
    m = np.asarray(mu)[tris].copy()
    m[:, :, 1] += chi_phi * np.asarray(sigma)[tris]
    inner = grad_p[:, None, :] - np.einsum("tcd,tkc->tkd", grad_phi, m)
    val = np.einsum("td,tkd->tk", grad_sig, inner)
    w = (K / 3.0) * ctx.areas
    np.add.at(load, tris, w[:, None] * val)
    return load


def darcy_rhs(ctx, phi, mu, sigma, uhat_sum, K, chi_phi):
    """Load for the pressure equation (grad p, grad chi) = rhs.

    First part: ((grad phi)^T (mu - N_phi(sigma)), grad chi)_h with vertex
    quadrature on the potential factor; second part: lumped (1/K)(1.Uhat, chi)_h.
    """
    nv = ctx.n_vertices
    tris = ctx.mesh.triangles
    phi_e = np.asarray(phi)[tris]
    grad_phi = np.einsum("tkc,tkd->tcd", phi_e, ctx.grads)
    m = np.asarray(mu)[tris].copy()
    m[:, :, 1] += chi_phi * np.asarray(sigma)[tris]
    q = np.einsum("tcd,tkc->tkd", grad_phi, m)      # (nt, vert, 2)
    contrib = np.einsum("tkd,tad->ta", q, ctx.grads) * (ctx.areas / 3.0)[:, None]
    rhs = np.zeros(nv)
    np.add.at(rhs, tris, contrib)
    rhs += ctx.lumped * np.asarray(uhat_sum) / K
    return rhs


def apply_dirichlet(a, b, dof_mask, value):
    """Impose u = value on masked dofs, keeping the matrix symmetric.

    Known values move to the load (column elimination); constrained rows and
    columns are zeroed and the diagonal set to 1.
    """
    dof_mask = np.asarray(dof_mask, dtype=bool)
    keep = (~dof_mask).astype(float)
    b2 = np.asarray(b, dtype=float).copy()
    if value != 0.0:
        g = np.where(dof_mask, value, 0.0)
        b2 -= a @ g
    b2[dof_mask] = value
    dk = sp.diags(keep)
    a2 = (dk @ a @ dk + sp.diags(dof_mask.astype(float))).tocsr()
    return a2, b2


def solve_spd(a, b, rtol=1e-10):
    """Sparse direct solve with an explicit residual check."""
    x = spla.spsolve(a.tocsc(), b)
    resid = np.linalg.norm(a @ x - b)
    scale = np.linalg.norm(b)
    if resid > rtol * max(scale, 1.0):
        raise RuntimeError(
            f"linear solve residual {resid:.3e} exceeds {rtol:.1e} * {scale:.3e}")
    return x


def discrete_energy(ctx, phi, sigma, beta, eps, chi_sigma=0.0, chi_phi=0.0,
                    bound_tol=1e-8):
    """Free energy of the discrete state; +inf outside the Gibbs simplex.

    Gradient part integrated exactly; the obstacle well beta/eps * psi with
    psi(phi) = 1/2 ((1.phi)^2 - |phi|^2), zero at the simplex corners and
    positive inside, and the nutrient terms use vertex quadrature.
    """
    phi = np.asarray(phi, dtype=float)
    viol = max(float(-phi.min(initial=0.0)),
               float(np.abs(phi.sum(axis=1) - 1.0).max(initial=0.0)))
    if viol > bound_tol:
        return np.inf
    tris = ctx.mesh.triangles
    grad_phi = np.einsum("tkc,tkd->tcd", phi[tris], ctx.grads)
    grad_part = 0.5 * beta * eps * float(
        np.einsum("t,tcd,tcd->", ctx.areas, grad_phi, grad_phi))
    psi_nodal = 0.5 * (phi.sum(axis=1) ** 2 - (phi ** 2).sum(axis=1))
    obstacle_part = (beta / eps) * float(ctx.lumped @ psi_nodal)
    energy = grad_part + obstacle_part
    if chi_sigma != 0.0 or chi_phi != 0.0:
        sigma = np.asarray(sigma, dtype=float)
        nutrient = 0.5 * chi_sigma * sigma ** 2 - chi_phi * sigma * phi[:, 1]
        energy += float(ctx.lumped @ nutrient)
    return energy
