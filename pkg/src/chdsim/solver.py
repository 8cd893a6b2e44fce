"""Time stepping for the coupled phase / nutrient / pressure system.

One step solves, in decoupled order: the variational inequality for the
phase fractions and chemical potentials by a projected block Gauss-Seidel
sweep with an exact local active-set solve, then the nutrient equation
(quasi-static or transient), then the Darcy pressure Poisson problem when
flow is on.  The driver adapts the mesh from the previous phase field,
transfers all fields, and halves the time step on solver failure.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from . import fem, physics
from .mesh import OUTER, interface_vertex_flags, straddle_vertex_flags


@dataclass
class PhaseState:
    """Nodal phase fractions (nv, 3) and chemical potentials (nv, 3)."""

    phi: np.ndarray
    mu: np.ndarray


@dataclass
class FlowState:
    """Nodal nutrient concentration (nv,) and pressure (nv,)."""

    sigma: np.ndarray
    p: np.ndarray


@dataclass(frozen=True)
class PgsReport:
    """Outcome of one projected Gauss-Seidel solve."""

    sweeps: int
    update_norm: float
    comp_residual: float
    converged: bool


class PgsFailure(RuntimeError):
    """Projected Gauss-Seidel did not meet its tolerance."""

    def __init__(self, report):
        super().__init__(
            f"projected Gauss-Seidel not converged after {report.sweeps} "
            f"sweeps (update {report.update_norm:.3e}, complementarity "
            f"{report.comp_residual:.3e})")
        self.report = report


class StepFailure(RuntimeError):
    """A full time step failed after exhausting the retry budget."""

    def __init__(self, step_index, cause):
        super().__init__(f"time step {step_index} failed: {cause}")
        self.step_index = step_index
        self.cause = cause


# the 7 faces of the 2-simplex as free-component masks: interior first,
# then the three edges, then the three vertices
_FACES = np.array([
    [1, 1, 1],
    [0, 1, 1], [1, 0, 1], [1, 1, 0],
    [0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=np.int64)


@njit(inline="always", cache=True)
def _solve3(b00, b01, b02, b10, b11, b12, b20, b21, b22, y0, y1, y2):
    """3x3 dense solve with partial pivoting; flags exact degeneracy."""
    # pivot column 0
    p = abs(b00)
    if abs(b10) > p:
        p = abs(b10)
        b00, b01, b02, y0, b10, b11, b12, y1 = b10, b11, b12, y1, b00, b01, b02, y0
    if abs(b20) > p:
        p = abs(b20)
        b00, b01, b02, y0, b20, b21, b22, y2 = b20, b21, b22, y2, b00, b01, b02, y0
    if p < 1e-300:
        return False, 0.0, 0.0, 0.0
    f = b10 / b00
    b11 -= f * b01
    b12 -= f * b02
    y1 -= f * y0
    f = b20 / b00
    b21 -= f * b01
    b22 -= f * b02
    y2 -= f * y0
    # pivot column 1
    if abs(b21) > abs(b11):
        b11, b12, y1, b21, b22, y2 = b21, b22, y2, b11, b12, y1
    if abs(b11) < 1e-300:
        return False, 0.0, 0.0, 0.0
    f = b21 / b11
    b22 -= f * b12
    y2 -= f * y1
    if abs(b22) < 1e-300:
        return False, 0.0, 0.0, 0.0
    x2 = y2 / b22
    x1 = (y1 - b12 * x2) / b11
    x0 = (y0 - b01 * x1 - b02 * x2) / b00
    return True, x0, x1, x2


@njit(cache=True)
def _pgs_kernel(indptr, indices, a_data, m_data, w, r, b, phi, mu,
                tau, beta, eps, tol, max_sweeps):
    """Sequential projected block Gauss-Seidel over ascending vertex index.

    At each vertex the frozen-neighbour problem couples the three phase
    fractions (nonnegative) and the three potentials through the lumped
    time term, the mobility block diagonal and the local obstacle rows;
    it is solved exactly by enumerating the faces of the simplex.  Vertices
    whose neighbourhood is bitwise unchanged since their last exact solve
    are skipped, which confines late sweeps to the interface band.
    Returns (sweeps, last update norm, complementarity residual).
    """
    nv = w.shape[0]
    be = beta * eps
    qf = (2.0 / 3.0) * beta / eps
    # sweep index when a vertex last changed; 0 marks every vertex dirty
    last_changed = np.zeros(nv, dtype=np.int64)
    last_face = np.zeros(nv, dtype=np.int64)
    upd = 1e300
    sweeps = 0
    while sweeps < max_sweeps and upd > tol:
        sweeps += 1
        upd = 0.0
        for j in range(nv):
            row0 = indptr[j]
            row1 = indptr[j + 1]
            dirty = False
            for e in range(row0, row1):
                if last_changed[indices[e]] >= sweeps - 1:
                    dirty = True
                    break
            if not dirty:
                continue
            # gather neighbour sums and the diagonal blocks
            am0 = 0.0
            am1 = 0.0
            am2 = 0.0
            ap0 = 0.0
            ap1 = 0.0
            ap2 = 0.0
            adiag = 0.0
            d00 = d01 = d02 = d10 = d11 = d12 = d20 = d21 = d22 = 0.0
            for e in range(row0, row1):
                l = indices[e]
                if l == j:
                    adiag = a_data[e]
                    d00 = m_data[e, 0, 0]
                    d01 = m_data[e, 0, 1]
                    d02 = m_data[e, 0, 2]
                    d10 = m_data[e, 1, 0]
                    d11 = m_data[e, 1, 1]
                    d12 = m_data[e, 1, 2]
                    d20 = m_data[e, 2, 0]
                    d21 = m_data[e, 2, 1]
                    d22 = m_data[e, 2, 2]
                else:
                    av = a_data[e]
                    ap0 += av * phi[l, 0]
                    ap1 += av * phi[l, 1]
                    ap2 += av * phi[l, 2]
                    am0 += (m_data[e, 0, 0] * mu[l, 0]
                            + m_data[e, 0, 1] * mu[l, 1]
                            + m_data[e, 0, 2] * mu[l, 2])
                    am1 += (m_data[e, 1, 0] * mu[l, 0]
                            + m_data[e, 1, 1] * mu[l, 1]
                            + m_data[e, 1, 2] * mu[l, 2])
                    am2 += (m_data[e, 2, 0] * mu[l, 0]
                            + m_data[e, 2, 1] * mu[l, 1]
                            + m_data[e, 2, 2] * mu[l, 2])
            wj = w[j]
            a = wj / tau
            g = be * adiag
            q = qf * wj
            gw = g / wj
            qw = q / wj
            rt0 = r[j, 0] - am0
            rt1 = r[j, 1] - am1
            rt2 = r[j, 2] - am2
            c0 = be * ap0 - wj * b[j, 0]
            c1 = be * ap1 - wj * b[j, 1]
            c2 = be * ap2 - wj * b[j, 2]
            # enumerate faces, last accepted face first
            start = last_face[j]
            found = False
            best_vio = 1e300
            bp0 = bp1 = bp2 = bm0 = bm1 = bm2 = 0.0
            bface = start
            for t in range(8):
                if t == 0:
                    fi = start
                elif t - 1 == start:
                    continue
                else:
                    fi = t - 1
                f0 = _FACES[fi, 0]
                f1 = _FACES[fi, 1]
                f2 = _FACES[fi, 2]
                # row k: time term (free k), eliminated potentials on free
                # columns, raw potential columns on clamped ones
                sr0 = f0 * d00 + f1 * d01 + f2 * d02
                sr1 = f0 * d10 + f1 * d11 + f2 * d12
                sr2 = f0 * d20 + f1 * d21 + f2 * d22
                y0 = rt0 - (f0 * d00 * c0 + f1 * d01 * c1 + f2 * d02 * c2) / wj
                y1 = rt1 - (f0 * d10 * c0 + f1 * d11 * c1 + f2 * d12 * c2) / wj
                y2 = rt2 - (f0 * d20 * c0 + f1 * d21 * c1 + f2 * d22 * c2) / wj
                if f0 == 1:
                    b00 = a + gw * d00 + qw * sr0
                    b10 = gw * d10 + qw * sr1
                    b20 = gw * d20 + qw * sr2
                else:
                    b00 = d00
                    b10 = d10
                    b20 = d20
                if f1 == 1:
                    b01 = gw * d01 + qw * sr0
                    b11 = a + gw * d11 + qw * sr1
                    b21 = gw * d21 + qw * sr2
                else:
                    b01 = d01
                    b11 = d11
                    b21 = d21
                if f2 == 1:
                    b02 = gw * d02 + qw * sr0
                    b12 = gw * d12 + qw * sr1
                    b22 = a + gw * d22 + qw * sr2
                else:
                    b02 = d02
                    b12 = d12
                    b22 = d22
                ok, x0, x1, x2 = _solve3(
                    b00, b01, b02, b10, b11, b12, b20, b21, b22, y0, y1, y2)
                if not ok:
                    continue
                p0 = x0 if f0 == 1 else 0.0
                p1 = x1 if f1 == 1 else 0.0
                p2 = x2 if f2 == 1 else 0.0
                s = p0 + p1 + p2
                if f0 == 1:
                    m0 = (g * p0 + q * s + c0) / wj
                else:
                    m0 = x0
                if f1 == 1:
                    m1 = (g * p1 + q * s + c1) / wj
                else:
                    m1 = x1
                if f2 == 1:
                    m2 = (g * p2 + q * s + c2) / wj
                else:
                    m2 = x2
                # primal feasibility on free components, dual on clamped
                vio = 0.0
                feas = True
                if f0 == 1:
                    if -p0 > vio:
                        vio = -p0
                    if p0 < -1e-12:
                        feas = False
                else:
                    gv = q * s + c0 - wj * m0
                    gs = abs(q * s) + abs(c0) + abs(wj * m0) + wj
                    if -gv / gs > vio:
                        vio = -gv / gs
                    if gv < -1e-10 * gs:
                        feas = False
                if f1 == 1:
                    if -p1 > vio:
                        vio = -p1
                    if p1 < -1e-12:
                        feas = False
                else:
                    gv = q * s + c1 - wj * m1
                    gs = abs(q * s) + abs(c1) + abs(wj * m1) + wj
                    if -gv / gs > vio:
                        vio = -gv / gs
                    if gv < -1e-10 * gs:
                        feas = False
                if f2 == 1:
                    if -p2 > vio:
                        vio = -p2
                    if p2 < -1e-12:
                        feas = False
                else:
                    gv = q * s + c2 - wj * m2
                    gs = abs(q * s) + abs(c2) + abs(wj * m2) + wj
                    if -gv / gs > vio:
                        vio = -gv / gs
                    if gv < -1e-10 * gs:
                        feas = False
                if feas:
                    bp0, bp1, bp2 = p0, p1, p2
                    bm0, bm1, bm2 = m0, m1, m2
                    bface = fi
                    found = True
                    break
                if vio < best_vio:
                    best_vio = vio
                    bp0, bp1, bp2 = p0, p1, p2
                    bm0, bm1, bm2 = m0, m1, m2
                    bface = fi
            if not found and best_vio >= 1e300:
                # every local system degenerate; keep the old values
                continue
            if bp0 < 0.0:
                bp0 = 0.0
            if bp1 < 0.0:
                bp1 = 0.0
            if bp2 < 0.0:
                bp2 = 0.0
            delta = abs(bp0 - phi[j, 0])
            if abs(bp1 - phi[j, 1]) > delta:
                delta = abs(bp1 - phi[j, 1])
            if abs(bp2 - phi[j, 2]) > delta:
                delta = abs(bp2 - phi[j, 2])
            if abs(bm0 - mu[j, 0]) > delta:
                delta = abs(bm0 - mu[j, 0])
            if abs(bm1 - mu[j, 1]) > delta:
                delta = abs(bm1 - mu[j, 1])
            if abs(bm2 - mu[j, 2]) > delta:
                delta = abs(bm2 - mu[j, 2])
            if delta > 0.0:
                phi[j, 0] = bp0
                phi[j, 1] = bp1
                phi[j, 2] = bp2
                mu[j, 0] = bm0
                mu[j, 1] = bm1
                mu[j, 2] = bm2
                last_changed[j] = sweeps
                if delta > upd:
                    upd = delta
            last_face[j] = bface
    # complementarity and equation residual over the final iterate
    comp = 0.0
    for j in range(nv):
        row0 = indptr[j]
        row1 = indptr[j + 1]
        am0 = 0.0
        am1 = 0.0
        am2 = 0.0
        ap0 = 0.0
        ap1 = 0.0
        ap2 = 0.0
        adiag = 0.0
        d00 = d01 = d02 = d10 = d11 = d12 = d20 = d21 = d22 = 0.0
        for e in range(row0, row1):
            l = indices[e]
            if l == j:
                adiag = a_data[e]
                d00 = m_data[e, 0, 0]
                d01 = m_data[e, 0, 1]
                d02 = m_data[e, 0, 2]
                d10 = m_data[e, 1, 0]
                d11 = m_data[e, 1, 1]
                d12 = m_data[e, 1, 2]
                d20 = m_data[e, 2, 0]
                d21 = m_data[e, 2, 1]
                d22 = m_data[e, 2, 2]
            else:
                av = a_data[e]
                ap0 += av * phi[l, 0]
                ap1 += av * phi[l, 1]
                ap2 += av * phi[l, 2]
                am0 += (m_data[e, 0, 0] * mu[l, 0]
                        + m_data[e, 0, 1] * mu[l, 1]
                        + m_data[e, 0, 2] * mu[l, 2])
                am1 += (m_data[e, 1, 0] * mu[l, 0]
                        + m_data[e, 1, 1] * mu[l, 1]
                        + m_data[e, 1, 2] * mu[l, 2])
                am2 += (m_data[e, 2, 0] * mu[l, 0]
                        + m_data[e, 2, 1] * mu[l, 1]
                        + m_data[e, 2, 2] * mu[l, 2])
        wj = w[j]
        a = wj / tau
        g = be * adiag
        q = qf * wj
        s = phi[j, 0] + phi[j, 1] + phi[j, 2]
        scale = (a + g + q + wj) * (1.0
                                    + abs(mu[j, 0]) + abs(mu[j, 1])
                                    + abs(mu[j, 2]) + abs(b[j, 0])
                                    + abs(b[j, 1]) + abs(b[j, 2]))
        for i in range(3):
            pv = phi[j, i]
            gv = (be * (ap0 if i == 0 else (ap1 if i == 1 else ap2))
                  + g * pv + q * s - wj * mu[j, i] - wj * b[j, i])
            if -pv > comp:
                comp = -pv
            if -gv / scale > comp:
                comp = -gv / scale
            if abs(pv * gv) / scale > comp:
                comp = abs(pv * gv) / scale
        res0 = (a * phi[j, 0] + am0 + d00 * mu[j, 0] + d01 * mu[j, 1]
                + d02 * mu[j, 2] - r[j, 0])
        res1 = (a * phi[j, 1] + am1 + d10 * mu[j, 0] + d11 * mu[j, 1]
                + d12 * mu[j, 2] - r[j, 1])
        res2 = (a * phi[j, 2] + am2 + d20 * mu[j, 0] + d21 * mu[j, 1]
                + d22 * mu[j, 2] - r[j, 2])
        for res in (res0, res1, res2):
            if abs(res) / scale > comp:
                comp = abs(res) / scale
    return sweeps, upd, comp


def _active_set_solve(ctx, blocks, w, r, b, cfg, tau, phi, mu):
    """Equality solve of the active set read off the current iterate.

    Freezing which components are clamped turns the variational inequality
    into a sparse linear system; its solution jumps the slowly relaxing
    potential field in near-degenerate regions to the exact answer in one
    solve.  Updates phi and mu in place and reports success; feasibility is
    NOT checked here, the Gauss-Seidel sweeps that follow repair and verify.
    """
    nv = ctx.n_vertices
    n = 3 * nv
    free = (phi > 0.0).ravel()
    be = cfg.beta * cfg.eps
    mmat = fem.blocks_to_matrix(ctx, blocks)
    top = sp.hstack([sp.diags(np.repeat(w / tau, 3)), mmat], format="csr")
    hmat = (be * sp.kron(ctx.stiffness, sp.eye(3, format="csr"), format="csr")
            + sp.kron(sp.diags(w),
                      (2.0 / 3.0) * (cfg.beta / cfg.eps) * np.ones((3, 3)),
                      format="csr"))
    frows = sp.hstack([hmat, sp.diags(-np.repeat(w, 3))], format="csr")
    crows = sp.hstack([sp.eye(n, format="csr"), sp.csr_matrix((n, n))],
                      format="csr")
    bottom = sp.diags(free.astype(float)) @ frows \
        + sp.diags((~free).astype(float)) @ crows
    kkt = sp.vstack([top, bottom], format="csc")
    rhs = np.concatenate([
        np.asarray(r).ravel(),
        np.where(free, np.repeat(w, 3) * np.asarray(b).ravel(), 0.0)])
    try:
        with np.errstate(all="ignore"):
            lu = spla.splu(kkt)
            x = lu.solve(rhs)
            x = x + lu.solve(rhs - kkt @ x)
    except Exception:
        return False
    if not np.isfinite(x).all():
        return False
    resid = np.linalg.norm(kkt @ x - rhs)
    if resid > 1e-6 * (np.linalg.norm(rhs) + 1.0):
        return False
    phi[:] = x[:n].reshape(nv, 3)
    mu[:] = x[n:].reshape(nv, 3)
    return True


def ch_step(ctx, prev, flow_prev, cfg, tau=None):
    """One implicit phase-field solve; returns (PhaseState, PgsReport).

    Explicit data (sources, Darcy transport, concave obstacle part and the
    chemotaxis pull) come from the previous state; the time term, mobility
    flow of the potentials, gradient stiffness and convex obstacle part are
    implicit.  Projected Gauss-Seidel sweeps decide convergence (max nodal
    change and complementarity both below tol); an active-set equality
    solve between sweep batches accelerates the near-degenerate potential
    subsystem, whose plain sweep contraction degrades with mesh size.
    Raises PgsFailure when the sweep budget is exhausted.
    """
    tau = cfg.tau if tau is None else tau
    phi0 = np.ascontiguousarray(prev.phi, dtype=float)
    mu0 = np.ascontiguousarray(prev.mu, dtype=float)
    sigma0 = np.asarray(flow_prev.sigma, dtype=float)
    w = ctx.lumped
    blocks = fem.mobility_stiffness(ctx, phi0, cfg.delta_mob)
    uhat = physics.source_hat(cfg.variant, phi0, sigma0, cfg.K, cfg.prolif,
                              cfg.apoptosis, cfg.degradation, cfg.eps)
    src = uhat - uhat.sum(axis=-1, keepdims=True) * phi0
    conv = fem.convection_rhs(ctx, phi0, mu0, flow_prev.p, sigma0,
                              cfg.K, cfg.chi_phi)
    r = np.ascontiguousarray((w / tau)[:, None] * phi0 + w[:, None] * src
                             + conv)
    b = np.ascontiguousarray(
        (cfg.beta / cfg.eps) * (phi0 @ physics.W_PLUS)
        - physics.nutrient_coupling(sigma0, cfg.chi_phi))
    phi = phi0.copy()
    mu = mu0.copy()
    a = ctx.stiffness
    total = 0
    upd = np.inf
    comp = np.inf
    probe = True
    last_free = None
    last_upd = np.inf
    stagnant = 0
    while total < cfg.max_sweeps:
        budget = 1 if probe else min(500, cfg.max_sweeps - total)
        sweeps, upd, comp = _pgs_kernel(
            a.indptr, a.indices, a.data, blocks, w, r, b, phi, mu,
            tau, cfg.beta, cfg.eps, cfg.tol_pgs, budget)
        total += sweeps
        if upd <= cfg.tol_pgs and comp <= cfg.tol_pgs:
            break
        free = (phi > 0.0).ravel()
        set_changed = last_free is None or not np.array_equal(free, last_free)
        if not probe and not set_changed:
            # The equality solve already handled this active set; a sweep
            # batch that barely decays on top of it sits at the solver noise
            # floor for this tolerance, so retrying is hopeless.
            stagnant = stagnant + 1 if upd >= 0.9 * last_upd else 0
            if stagnant >= 2:
                break
        probe = False
        last_upd = upd
        if set_changed and total < cfg.max_sweeps:
            if _active_set_solve(ctx, blocks, w, r, b, cfg, tau, phi, mu):
                last_free = free
    converged = upd <= cfg.tol_pgs and comp <= cfg.tol_pgs
    report = PgsReport(int(total), float(upd), float(comp), converged)
    if not converged:
        raise PgsFailure(report)
    if phi.min() < -1e-10 or np.abs(phi.sum(axis=1) - 1.0).max() > 1e-10:
        raise PgsFailure(report)
    return PhaseState(phi, mu), report


def _outer_mask(ctx):
    return ctx.mesh.vertex_boundary_kind == OUTER


def nutrient_step_quasistatic(ctx, phi, cfg):
    """Solve the quasi-static nutrient equation with outer Dirichlet data.

    Diffusion against a lumped consumption reaction on the proliferating
    fraction, driven by the chemotaxis load lam * (grad phi_2, grad chi);
    the reaction coefficient clamps phi_2 to [0, 1] so the system stays
    positive definite under solver-tolerance undershoots.
    """
    phi = np.asarray(phi, dtype=float)
    a = ctx.stiffness
    react = cfg.consumption * ctx.lumped * np.clip(phi[:, 1], 0.0, 1.0)
    system = (cfg.D * a + sp.diags(react)).tocsr()
    rhs = cfg.lam * (a @ phi[:, 1])
    outer = _outer_mask(ctx)
    a2, b2 = fem.apply_dirichlet(system, rhs, outer, cfg.sigma_B)
    sigma = fem.solve_spd(a2, b2)
    sigma[outer] = cfg.sigma_B
    return sigma


def nutrient_step_transient(ctx, flow_prev, phase_new, phi_prev, cfg, tau):
    """Implicit-diffusion transient nutrient step.

    Time term and consumption reaction are implicit and lumped; the Darcy
    transport load, the net-source decay term (both at the previous time
    level) and the chemotaxis load on the new phase field are explicit.
    """
    sigma0 = np.asarray(flow_prev.sigma, dtype=float)
    phi_n = np.asarray(phase_new.phi, dtype=float)
    a = ctx.stiffness
    w = ctx.lumped
    react = cfg.consumption * w * np.clip(phi_n[:, 1], 0.0, 1.0)
    system = (sp.diags(w / tau) + cfg.D * a + sp.diags(react)).tocsr()
    uhat = physics.source_hat(cfg.variant, phi_prev, sigma0, cfg.K,
                              cfg.prolif, cfg.apoptosis, cfg.degradation,
                              cfg.eps)
    transport = fem.nutrient_convection_rhs(
        ctx, sigma0, flow_prev.p, phi_n, phase_new.mu, cfg.K, cfg.chi_phi)
    rhs = ((w / tau) * sigma0 + transport + cfg.lam * (a @ phi_n[:, 1])
           - w * uhat.sum(axis=-1) * sigma0)
    outer = _outer_mask(ctx)
    a2, b2 = fem.apply_dirichlet(system, rhs, outer, cfg.sigma_B)
    sigma = fem.solve_spd(a2, b2)
    sigma[outer] = cfg.sigma_B
    return sigma


def pressure_step(ctx, phase, sigma, cfg):
    """Darcy pressure Poisson solve with homogeneous outer Dirichlet data."""
    if cfg.K <= 0.0:
        raise ValueError("pressure step requires K > 0")
    phi = np.asarray(phase.phi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    uhat = physics.source_hat(cfg.variant, phi, sigma, cfg.K, cfg.prolif,
                              cfg.apoptosis, cfg.degradation, cfg.eps)
    rhs = fem.darcy_rhs(ctx, phi, phase.mu, sigma, uhat.sum(axis=-1),
                        cfg.K, cfg.chi_phi)
    outer = _outer_mask(ctx)
    a2, b2 = fem.apply_dirichlet(ctx.stiffness, rhs, outer, 0.0)
    p = fem.solve_spd(a2, b2)
    p[outer] = 0.0
    return p


@dataclass
class SimState:
    """Everything one time step consumes and produces."""

    mesh: object
    ctx: object
    phase: PhaseState
    flow: FlowState
    time: float = 0.0
    step_index: int = 0
    diagnostics: dict = field(default_factory=dict)


def _cycle(ctx, phase, flow, cfg, tau, depth, reports):
    """ch -> nutrient -> pressure at step size tau, halving on failure."""
    phi_prev = phase.phi
    try:
        phase_new, report = ch_step(ctx, phase, flow, cfg, tau=tau)
    except PgsFailure:
        if depth >= cfg.max_halvings:
            raise
        mid_phase, mid_flow = _cycle(ctx, phase, flow, cfg, tau / 2.0,
                                     depth + 1, reports)
        return _cycle(ctx, mid_phase, mid_flow, cfg, tau / 2.0,
                      depth + 1, reports)
    reports.append((depth, report))
    if cfg.quasi_static:
        sigma = nutrient_step_quasistatic(ctx, phase_new.phi, cfg)
    else:
        sigma = nutrient_step_transient(ctx, flow, phase_new, phi_prev,
                                        cfg, tau)
    if cfg.K > 0.0:
        p = pressure_step(ctx, phase_new, sigma, cfg)
    else:
        p = np.zeros(ctx.n_vertices)
    return phase_new, FlowState(sigma, p)


def advance(state, cfg):
    """One full time step: adapt, transfer, solve all fields, move time.

    Mesh adaptation flags come from the pre-step phase field (interface
    band plus any triangle whose vertices straddle a half level); all
    fields transfer before any solve so each linear system lives on one
    mesh.  Returns a new SimState; failures raise StepFailure carrying the
    step index.
    """
    step_index = state.step_index + 1
    flags = interface_vertex_flags(state.phase.phi, cfg.delta_ind)
    flags |= straddle_vertex_flags(state.mesh, state.phase.phi)
    new_mesh, tmap = state.mesh.adapt(flags, cfg.h_f, cfg.h_c)
    if tmap.is_identity:
        new_mesh = state.mesh
        ctx = state.ctx
        phi = state.phase.phi
        mu = state.phase.mu
        sigma = state.flow.sigma
        p = state.flow.p
    else:
        ctx = fem.FemContext(new_mesh)
        phi = tmap.apply(state.phase.phi)
        mu = tmap.apply(state.phase.mu)
        sigma = tmap.apply(state.flow.sigma)
        p = tmap.apply(state.flow.p)
    phase = PhaseState(phi, mu)
    flow = FlowState(sigma, p)
    reports = []
    try:
        phase_new, flow_new = _cycle(ctx, phase, flow, cfg, cfg.tau, 0,
                                     reports)
    except (PgsFailure, RuntimeError, ValueError) as exc:
        raise StepFailure(step_index, exc) from exc
    diagnostics = {
        "adapted": not tmap.is_identity,
        "n_vertices": ctx.n_vertices,
        "halvings": max(depth for depth, _ in reports),
        "sweeps": tuple(rep.sweeps for _, rep in reports),
        "update_norm": max(rep.update_norm for _, rep in reports),
        "comp_residual": max(rep.comp_residual for _, rep in reports),
        "phi_before": phi,
        "sigma_before": sigma,
    }
    return SimState(new_mesh, ctx, phase_new, flow_new,
                    time=state.time + cfg.tau, step_index=step_index,
                    diagnostics=diagnostics)
