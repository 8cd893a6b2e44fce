"""Compiled-in parameter sets for the standard simulation scenarios."""

from ..physics import SimConfig

# shared base: (-5,5)^2, two-mode perturbed tumour, chemotaxis on,
# nonlinear interfacial sources, well-fed boundary
_BASE = SimConfig(
    eps=0.05, beta=0.1, K=0.01, D=1.0, lam=0.1, chi_phi=0.1,
    consumption=2.0, variant="C", prolif=0.5, apoptosis=0.5,
    degradation=0.0, sigma_B=5.0, tau=1e-3, h_f=0.02, h_c=0.16,
    half_width=5.0, quarter=True, R2=2.0, R3=1.0,
    delta2=0.1, m2=2, delta3=0.05, m3=6, T_end=5.0, cadence=0.1)

# large-domain variant: (-10,10)^2, linear sources, no apoptosis,
# strong chemotaxis, nutrient-poor boundary
_LARGE = _BASE.with_overrides(
    half_width=10.0, variant="A", prolif=0.1, apoptosis=0.0, lam=0.02,
    chi_phi=5.0, sigma_B=1.0, delta2=0.1, m2=2, delta3=0.0, T_end=25.0)


def _circular(cfg):
    return cfg.with_overrides(delta2=0.0, delta3=0.0)


def _build():
    table = {}
    table["fig1"] = [("fig1", _BASE)]
    table["fig2"] = [("fig2", _BASE.with_overrides(m2=6, m3=4))]
    radial = []
    for sigma_b in (2.0, 5.0, 10.0):
        for k in (0.0, 0.01):
            label = f"sB{sigma_b:g}-K{k:g}"
            radial.append((label, _circular(_BASE).with_overrides(
                sigma_B=sigma_b, K=k, T_end=4.0)))
    table["fig3-radial"] = radial
    gap = [(f"K{k:g}", _circular(_BASE).with_overrides(
        sigma_B=2.0, K=k, T_end=8.0)) for k in (0.0, 0.01)]
    table["fig4-gap"] = gap
    table["fig5"] = gap
    table["fig6"] = [(f"K{k:g}", _BASE.with_overrides(
        variant="A", K=k, T_end=2.0)) for k in (0.01, 0.0)]
    table["fig7-large"] = [("fig7-large", _LARGE)]
    table["fig8-smallcore"] = [("fig8-smallcore", _LARGE.with_overrides(R3=0.5))]
    for d_n in (0, 1, 5):
        table[f"fig9-Dn{d_n}"] = [(f"fig9-Dn{d_n}", _LARGE.with_overrides(
            R3=1.5, degradation=float(d_n)))]
    return table


_TABLE = _build()


def preset_names():
    """Names of the available presets, in a stable order."""
    return tuple(_TABLE)


def preset(name):
    """List of (label, config) runs for a named scenario.

    Most scenarios are a single run; the parameter studies return one entry
    per parameter combination.  Unknown names raise ValueError listing the
    valid choices.
    """
    try:
        return list(_TABLE[name])
    except KeyError:
        valid = ", ".join(_TABLE)
        raise ValueError(f"unknown preset {name!r}; valid presets: {valid}") \
            from None
