"""Tests for the simulation front end: presets, initial data, IO, runner."""

import numpy as np
import pytest

from chdsim import solver
from chdsim.mesh import build_disc_mesh, build_square_mesh, \
    interface_vertex_flags, straddle_vertex_flags
from chdsim.physics import SimConfig
from chdsim.sim import cli, initial, io, postproc, presets, runner


def coarse_cfg(**overrides):
    """Small, fast configuration with all couplings switched on."""
    base = dict(eps=0.35, h_f=0.25, h_c=0.5, tau=1e-3, T_end=0.005,
                cadence=0.002, K=0.01, variant="C", consumption=2.0,
                prolif=0.5, apoptosis=0.5, lam=0.1, chi_phi=0.1,
                sigma_B=5.0, n_rays=64)
    base.update(overrides)
    return SimConfig(**base)


# ------------------------------------------------------------ initial data

def test_initial_phase_bulk_values_exact():
    cfg = SimConfig(eps=0.1, R2=2.0, R3=1.0)
    mesh = build_disc_mesh(4.0, 1.0)
    phase = initial.initial_phase(mesh, cfg, cfg.eps)
    r = np.hypot(*mesh.vertices.T)
    core = r < cfg.R3 - cfg.eps * np.pi / 2
    far = r > cfg.R2 + cfg.eps * np.pi / 2
    assert core.any() and far.any()
    assert np.array_equal(phase.phi[core],
                          np.tile([0.0, 0.0, 1.0], (core.sum(), 1)))
    assert np.array_equal(phase.phi[far],
                          np.tile([1.0, 0.0, 0.0], (far.sum(), 1)))
    assert np.abs(phase.mu).max() == 0.0


def test_initial_phase_is_half_on_the_unperturbed_front():
    cfg = SimConfig(eps=0.1, R2=2.0, R3=1.0)
    mesh = build_disc_mesh(4.0, 1.0)
    phase = initial.initial_phase(mesh, cfg, cfg.eps)
    on_front = np.abs(np.hypot(*mesh.vertices.T) - cfg.R2) < 1e-12
    assert on_front.any()
    # v2 = 1/2 there and v3 = 0, so phi = (1/2, 1/2, 0)
    assert np.abs(phase.phi[on_front] - [0.5, 0.5, 0.0]).max() <= 1e-13


def test_initial_phase_stays_on_the_simplex():
    cfg = SimConfig(eps=0.2, delta2=0.1, m2=2, delta3=0.05, m3=6)
    mesh = build_square_mesh(5.0, 0.2)
    phase = initial.initial_phase(mesh, cfg, cfg.eps)
    assert phase.phi.min() >= 0.0
    assert np.abs(phase.phi.sum(axis=1) - 1.0).max() <= 1e-15


def test_initial_state_is_an_adaptation_fixed_point():
    cfg = coarse_cfg(h_f=0.1, h_c=0.4)
    state = initial.initial_state(cfg)
    flags = interface_vertex_flags(state.phase.phi, cfg.delta_ind)
    flags |= straddle_vertex_flags(state.mesh, state.phase.phi)
    _, tmap = state.mesh.adapt(flags, cfg.h_f, cfg.h_c)
    assert tmap.is_identity
    assert np.all(state.flow.sigma == cfg.sigma_B)
    assert np.all(state.flow.p == 0.0)


def test_initial_state_resolves_the_band_at_the_fine_width():
    cfg = coarse_cfg(h_f=0.1, h_c=0.4)
    state = initial.initial_state(cfg)
    mesh = state.mesh
    centers = mesh.vertices[mesh.triangles].mean(axis=1)
    r = np.hypot(*centers.T)
    band = np.abs(r - cfg.R2) < cfg.eps
    assert band.any()
    assert mesh.triangle_diameters()[band].max() <= cfg.h_f * np.sqrt(2.0) + 1e-12


# ------------------------------------------------------------ presets

def test_preset_names_cover_the_published_scenarios():
    assert set(presets.preset_names()) == {
        "fig1", "fig2", "fig3-radial", "fig4-gap", "fig5", "fig6",
        "fig7-large", "fig8-smallcore", "fig9-Dn0", "fig9-Dn1", "fig9-Dn5"}


def test_preset_unknown_name_lists_the_valid_ones():
    with pytest.raises(ValueError, match="fig3-radial.*fig7-large"):
        presets.preset("fig99")


def test_preset_standard_scenario_parameters():
    ((label, cfg),) = presets.preset("fig1")
    assert label == "fig1"
    assert (cfg.half_width, cfg.eps, cfg.h_f, cfg.h_c) == (5.0, 0.05, 0.02, 0.16)
    assert (cfg.tau, cfg.apoptosis, cfg.D, cfg.beta) == (1e-3, 0.5, 1.0, 0.1)
    assert (cfg.consumption, cfg.prolif, cfg.lam, cfg.chi_phi) == (2.0, 0.5, 0.1, 0.1)
    assert (cfg.degradation, cfg.sigma_B, cfg.K, cfg.variant) == (0.0, 5.0, 0.01, "C")
    assert (cfg.R2, cfg.R3) == (2.0, 1.0)
    assert (cfg.delta2, cfg.m2, cfg.delta3, cfg.m3) == (0.1, 2, 0.05, 6)
    ((_, cfg2),) = presets.preset("fig2")
    assert (cfg2.m2, cfg2.m3) == (6, 4)
    assert cfg2.with_overrides(m2=2, m3=6) == cfg


def test_preset_large_domain_scenarios():
    ((_, cfg),) = presets.preset("fig7-large")
    assert (cfg.half_width, cfg.apoptosis, cfg.prolif) == (10.0, 0.0, 0.1)
    assert (cfg.lam, cfg.chi_phi, cfg.sigma_B, cfg.K) == (0.02, 5.0, 1.0, 0.01)
    assert (cfg.variant, cfg.R3, cfg.delta2, cfg.m2, cfg.delta3) == \
        ("A", 1.0, 0.1, 2, 0.0)
    ((_, small),) = presets.preset("fig8-smallcore")
    assert small == cfg.with_overrides(R3=0.5)
    ((_, dn5),) = presets.preset("fig9-Dn5")
    assert dn5 == cfg.with_overrides(R3=1.5, degradation=5.0)


def test_preset_parameter_studies_return_one_entry_per_run():
    gap = presets.preset("fig4-gap")
    assert [label for label, _ in gap] == ["K0", "K0.01"]
    for _, cfg in gap:
        assert (cfg.sigma_B, cfg.delta2, cfg.delta3, cfg.T_end) == \
            (2.0, 0.0, 0.0, 8.0)
    assert [cfg.K for _, cfg in gap] == [0.0, 0.01]
    assert presets.preset("fig5") == gap
    radial = presets.preset("fig3-radial")
    assert len(radial) == 6
    assert {(cfg.sigma_B, cfg.K) for _, cfg in radial} == \
        {(s, k) for s in (2.0, 5.0, 10.0) for k in (0.0, 0.01)}


# ------------------------------------------------------------ radius extraction

def test_extract_radii_circular_data():
    cfg = coarse_cfg(h_f=0.1, h_c=0.4, eps=0.2)
    state = initial.initial_state(cfg)
    sample = postproc.extract_radii(state.mesh, state.phase.phi, 64)
    assert not sample.outer_absent and not sample.inner_absent
    assert np.isfinite(sample.r_outer).all()
    assert abs(sample.mean_outer - cfg.R2) <= cfg.h_f
    assert abs(sample.mean_inner - cfg.R3) <= cfg.h_f
    assert sample.amps_outer.max() <= cfg.h_f
    assert np.all(sample.r_inner <= sample.r_outer + cfg.eps * np.pi)


def test_extract_radii_recovers_perturbation_modes():
    cfg = coarse_cfg(h_f=0.05, h_c=0.4, eps=0.2,
                     delta2=0.1, m2=2, delta3=0.05, m3=6)
    state = initial.initial_state(cfg)
    sample = postproc.extract_radii(state.mesh, state.phase.phi, 128)
    assert abs(sample.mean_outer - cfg.R2) <= cfg.h_f
    assert abs(sample.amps_outer[cfg.m2 - 1] - cfg.delta2) <= cfg.h_f
    assert abs(sample.amps_inner[cfg.m3 - 1] - cfg.delta3) <= cfg.h_f
    others = [sample.amps_outer[m] for m in range(8) if m != cfg.m2 - 1]
    assert max(others) <= cfg.h_f


def test_extract_radii_vanished_phase_is_absent_everywhere():
    cfg = coarse_cfg(h_f=0.1, h_c=0.4, eps=0.2)
    state = initial.initial_state(cfg)
    phi = state.phase.phi.copy()
    phi[:, 0] += phi[:, 2]
    phi[:, 2] = 0.0
    sample = postproc.extract_radii(state.mesh, phi, 64)
    assert sample.inner_absent
    assert np.isnan(sample.r_inner).all()
    assert np.isnan(sample.amps_inner).all()
    assert not sample.outer_absent


def test_extract_radii_accepts_phase_state_and_checks_ray_count():
    cfg = coarse_cfg(h_f=0.1, h_c=0.4, eps=0.2)
    state = initial.initial_state(cfg)
    sample = postproc.extract_radii(state.mesh, state.phase, 16)
    assert abs(sample.mean_outer - cfg.R2) <= cfg.h_f
    with pytest.raises(ValueError, match="n_rays"):
        postproc.extract_radii(state.mesh, state.phase, 8)


def test_scalar_view_values_and_range():
    phi = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
                    [0.5, 0.5, 0.0]])
    assert np.array_equal(postproc.scalar_view(phi), [0.0, 1.0, 2.0, 0.5])
    rng = np.random.default_rng(5)
    raw = -np.log(rng.random((500, 3)))
    view = postproc.scalar_view(raw / raw.sum(axis=1, keepdims=True))
    assert view.min() >= -1e-10 and view.max() <= 2.0 + 1e-10


# ------------------------------------------------------------ file formats

def test_vtk_roundtrip_exact(tmp_path):
    mesh = build_square_mesh(1.0, 0.5, quarter=True)
    rng = np.random.default_rng(2)
    fields = [("phase", rng.random(mesh.n_vertices)),
              ("sigma", rng.standard_normal(mesh.n_vertices) * 1e3)]
    path = tmp_path / "f.vtk"
    io.write_vtk(mesh, fields, path)
    verts, tris, back = io.read_vtk(path)
    assert np.abs(verts - mesh.vertices).max() <= 1e-12
    assert np.array_equal(tris, mesh.triangles)
    assert list(back) == ["phase", "sigma"]
    for name, values in fields:
        assert np.abs(back[name] - values).max() <= 1e-12
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert "CELL_TYPES" in text and " double" in text


def test_vtk_empty_field_list_is_geometry_only(tmp_path):
    mesh = build_square_mesh(1.0, 1.0, quarter=True)
    path = tmp_path / "geo.vtk"
    io.write_vtk(mesh, [], path)
    verts, tris, back = io.read_vtk(path)
    assert len(back) == 0
    assert verts.shape == (4, 2) and tris.shape == (2, 3)
    assert "POINT_DATA" not in path.read_text()


def test_vtk_rejects_misshaped_fields(tmp_path):
    mesh = build_square_mesh(1.0, 1.0, quarter=True)
    with pytest.raises(ValueError, match="shape"):
        io.write_vtk(mesh, [("bad", np.zeros(3))], tmp_path / "bad.vtk")


def test_csv_header_row_count_and_nan_roundtrip(tmp_path):
    ticks = 5
    rows = [(0.1 * k, np.nan if k == 2 else 1.0 + k, 2.0 + k,
             *(0.01 * m for m in range(8)), -float(k))
            for k in range(ticks + 1)]
    path = tmp_path / "trace.csv"
    io.write_csv(rows, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,r_inner,r_outer,amp_m1,amp_m2,amp_m3,amp_m4," \
                       "amp_m5,amp_m6,amp_m7,amp_m8,energy"
    assert len(lines) == ticks + 2  # one per cadence tick, plus t=0 and header
    back = io.read_csv(path)
    assert back.shape == (ticks + 1, 12)
    assert np.isnan(back[2, 1]) and not np.isnan(back).all()
    mask = ~np.isnan(np.array(rows))
    assert np.array_equal(back[mask], np.array(rows)[mask])


def test_csv_rejects_short_rows(tmp_path):
    with pytest.raises(ValueError, match="12"):
        io.write_csv([(0.0, 1.0)], tmp_path / "bad.csv")


def test_config_roundtrip_all_presets(tmp_path):
    for name in presets.preset_names():
        for label, cfg in presets.preset(name):
            path = tmp_path / f"{name}-{label}.txt"
            io.write_config(cfg, path)
            assert io.read_config(path) == cfg


def test_config_file_is_flat_commented_key_value(tmp_path):
    path = tmp_path / "config.txt"
    io.write_config(SimConfig(), path)
    lines = path.read_text().strip().split("\n")
    body = [line for line in lines if not line.startswith("#")]
    assert len(body) == len(SimConfig.__dataclass_fields__)
    assert all("=" in line and "#" in line for line in body)


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "config.txt"
    path.write_text("eps = 0.1\nbogus = 3\n")
    with pytest.raises(ValueError, match="bogus"):
        io.read_config(path)


# ------------------------------------------------------------ runner

def test_run_outputs_and_determinism(tmp_path):
    cfg = coarse_cfg()
    state1, trace1 = runner.run(cfg, tmp_path / "r1")
    state2, trace2 = runner.run(cfg, tmp_path / "r2")
    first = (tmp_path / "r1" / "trace.csv").read_bytes()
    assert first == (tmp_path / "r2" / "trace.csv").read_bytes()
    assert state1.phase.phi.tobytes() == state2.phase.phi.tobytes()
    # one trace row per step plus the initial one
    assert len(trace1) == 6
    assert trace1[0][0] == 0.0
    assert abs(trace1[-1][0] - cfg.T_end) <= 1e-12
    # snapshots at t=0 and every cadence tick
    snaps = sorted((tmp_path / "r1").glob("fields_*.vtk"))
    assert [s.name for s in snaps] == \
        ["fields_0000.vtk", "fields_0001.vtk", "fields_0002.vtk"]
    _, _, fields = io.read_vtk(snaps[-1])
    assert list(fields) == ["phase", "sigma", "pressure"]
    assert io.read_config(tmp_path / "r1" / "config.txt") == cfg
    back = io.read_csv(tmp_path / "r1" / "trace.csv")
    assert back.shape == (6, 12)
    assert np.isfinite(back[:, -1]).all()


def test_run_failure_dumps_state_and_reports_step(tmp_path):
    cfg = coarse_cfg(tol_pgs=1e-300, max_sweeps=2, max_halvings=0)
    with pytest.raises(solver.StepFailure) as info:
        runner.run(cfg, tmp_path)
    assert info.value.step_index == 1
    assert (tmp_path / "fields_failed.vtk").exists()
    assert io.read_csv(tmp_path / "trace.csv").shape == (1, 12)


# ------------------------------------------------------------ CLI

def test_cli_run_unknown_preset_fails_cleanly(tmp_path, capsys):
    assert cli.main(["run", "--preset", "fig99",
                     "--out", str(tmp_path)]) == 2
    assert "valid presets" in capsys.readouterr().err


def test_cli_run_executes_with_overrides(tmp_path, capsys):
    code = cli.main([
        "run", "--preset", "fig1", "--out", str(tmp_path), "--quarter",
        "--t-end", "0.002",
        "--override", "h_f=0.25", "--override", "h_c=0.5",
        "--override", "eps=0.35", "--override", "n_rays=64",
        "--override", "cadence=0.001"])
    assert code == 0
    assert "done: 2 steps" in capsys.readouterr().out
    cfg = io.read_config(tmp_path / "config.txt")
    assert (cfg.T_end, cfg.h_f, cfg.eps) == (0.002, 0.25, 0.35)
    assert cfg.quarter
    assert io.read_csv(tmp_path / "trace.csv").shape == (3, 12)


def test_cli_run_bad_override_fails_cleanly(tmp_path, capsys):
    assert cli.main(["run", "--preset", "fig1", "--out", str(tmp_path),
                     "--override", "bogus=1"]) == 2
    assert "bogus" in capsys.readouterr().err


def test_cli_oracle_prints_the_radial_profile(capsys):
    assert cli.main(["oracle", "--R3", "1", "--R2", "2", "--Rout", "5",
                     "--C", "2", "--sigmaB", "5", "--n", "11"]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "r,sigma"
    assert len(lines) == 12
    data = np.array([line.split(",") for line in lines[1:]], dtype=float)
    assert data[-1, 1] == 5.0
    assert np.all(np.diff(data[:, 1]) >= -1e-12)


def test_cli_validate_passes(capsys):
    assert cli.main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "all" in out and "FAIL" not in out
