"""Pointwise model ingredients for the three-phase tumour-growth system.

Phases are volume fractions phi = (host, proliferating, necrotic) living on
the Gibbs simplex.  This module collects the closed-form pieces: the obstacle
potential's quadratic split, the tangent-space projection, the degenerate
mobility tensor, the chemotaxis coupling, the source-term variants and the
run configuration.  Everything is a pure function broadcasting over leading
axes; mesh-dependent functionals live in the fem module.
"""

from dataclasses import dataclass, fields, replace

import numpy as np

ONES3 = np.ones(3)
# multi-well obstacle potential: psi(phi) = 1/2 phi . W phi on the simplex,
# split W = W_PLUS + W_MINUS with W_PLUS PSD (implicit part) and W_MINUS
# negative semidefinite (explicit part)
W_FULL = np.eye(3) - np.outer(ONES3, ONES3)
W_MINUS = -(2.0 / 3.0) * np.outer(ONES3, ONES3)
W_PLUS = W_FULL - W_MINUS

VARIANTS = ("A", "B", "C")


def project_tg(f):
    """Project 3-vectors onto the simplex tangent space (zero-sum part)."""
    f = np.asarray(f, dtype=float)
    return f - f.mean(axis=-1, keepdims=True)


def mobility(phi, delta=1e-6):
    """Degenerate mobility tensor C(phi), batched over leading axes.

    C_ij = m_i (delta_ij - m_j / sum_k m_k) with bare mobilities
    m_1 = 1 - phi_1 + delta and m_2 = m_3 = phi_i + delta; phi is clamped to
    [0, 1] componentwise first.  Symmetric, PSD, zero row and column sums.
    """
    phi = np.clip(np.asarray(phi, dtype=float), 0.0, 1.0)
    m = np.empty_like(phi)
    m[..., 0] = 1.0 - phi[..., 0] + delta
    m[..., 1] = phi[..., 1] + delta
    m[..., 2] = phi[..., 2] + delta
    total = m.sum(axis=-1, keepdims=True)
    # delta=0 at a simplex vertex sends every bare mobility to zero; the
    # tensor's limit there is zero, so keep the quotient well defined
    total = np.maximum(total, 1e-300)
    c = -(m[..., :, None] * m[..., None, :]) / total[..., None]
    idx = np.arange(3)
    c[..., idx, idx] += m
    return c


def nutrient_coupling(sigma, chi_phi):
    """Chemotaxis derivative of the coupling energy: (0, -chi_phi*sigma, 0)."""
    sigma = np.asarray(sigma, dtype=float)
    out = np.zeros(sigma.shape + (3,))
    out[..., 1] = -chi_phi * sigma
    return out


def source(variant, phi, sigma, prolif, apoptosis, degradation, eps=None):
    """Mass source vector U(phi, sigma) for one of the three model variants.

    A: proliferating cells gain phi2*(P*sigma - A), necrotic cells gain
       A*phi2 - D_N*phi3, host untouched.
    B: as A but the host loses the proliferation gain (zero total when D_N=0).
    C: interfacial variant with eps^-1 phi(1-phi) prefactors.
    """
    phi = np.asarray(phi, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p2 = phi[..., 1]
    p3 = phi[..., 2]
    out = np.zeros(np.broadcast(p2, sigma).shape + (3,))
    growth = prolif * sigma - apoptosis
    if variant == "A":
        out[..., 1] = p2 * growth
        out[..., 2] = apoptosis * p2 - degradation * p3
    elif variant == "B":
        out[..., 0] = -p2 * prolif * sigma
        out[..., 1] = p2 * growth
        out[..., 2] = apoptosis * p2 - degradation * p3
    elif variant == "C":
        if eps is None:
            raise ValueError("variant C needs the interface width eps")
        out[..., 1] = p2 * (1.0 - p2) * growth / eps
        out[..., 2] = p3 * (1.0 - p3) * (apoptosis - degradation) / eps
    else:
        raise ValueError(f"unknown source variant {variant!r}")
    return out


def source_hat(variant, phi, sigma, K, prolif, apoptosis, degradation,
               eps=None):
    """Source as seen by the phase equation.

    With flow (K > 0) the divergence constraint absorbs the net volume gain,
    so U enters unchanged; without flow the zero-sum part U - (1.U) phi is
    used so nodewise sum(phi) = 1 survives.
    """
    u = source(variant, phi, sigma, prolif, apoptosis, degradation, eps)
    if K > 0:
        return u
    phi = np.asarray(phi, dtype=float)
    return u - u.sum(axis=-1, keepdims=True) * phi


@dataclass(frozen=True)
class SimConfig:
    """Every scalar knob of the model, the scheme and the run."""

    # model
    eps: float = 0.05
    beta: float = 0.1
    K: float = 0.0
    D: float = 1.0
    lam: float = 0.0            # chemotaxis-to-diffusion ratio chi_phi/chi_sigma
    chi_phi: float = 0.0
    consumption: float = 0.0    # nutrient consumption rate by phase 2
    variant: str = "A"
    prolif: float = 0.0
    apoptosis: float = 0.0
    degradation: float = 0.0
    sigma_B: float = 1.0
    delta_mob: float = 1e-6
    quasi_static: bool = True
    # discretisation
    tau: float = 1e-3
    h_f: float = 0.02
    h_c: float = 0.16
    half_width: float = 5.0
    domain: str = "square"      # "square" or "disc"
    quarter: bool = True
    tol_pgs: float = 1e-7
    max_sweeps: int = 10000
    delta_ind: float = 1e-3
    max_halvings: int = 6
    # initial data
    R2: float = 2.0
    R3: float = 1.0
    delta2: float = 0.0
    m2: int = 2
    delta3: float = 0.0
    m3: int = 6
    # run control
    T_end: float = 1.0
    cadence: float = 0.1
    n_rays: int = 256

    def __post_init__(self):
        if min(self.eps, self.tau, self.beta, self.D) <= 0:
            raise ValueError("eps, tau, beta and D must be positive")
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        for name in ("lam", "chi_phi", "consumption", "prolif", "apoptosis",
                     "degradation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.h_f > self.h_c:
            raise ValueError("h_f must not exceed h_c")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.domain not in ("square", "disc"):
            raise ValueError("domain must be 'square' or 'disc'")
        if not self.R3 < self.R2:
            raise ValueError("initial radii need R3 < R2")
        if min(self.delta2, self.delta3) < 0:
            raise ValueError("perturbation amplitudes must be nonnegative")
        if min(self.m2, self.m3) < 1:
            raise ValueError("perturbation mode numbers must be at least 1")

    @property
    def chi_sigma(self):
        """Nutrient self-energy coefficient; 1 when chemotaxis is off."""
        if self.lam > 0:
            return self.chi_phi / self.lam
        return 1.0

    def with_overrides(self, **kwargs):
        return replace(self, **kwargs)


def config_field_names():
    return [f.name for f in fields(SimConfig)]
