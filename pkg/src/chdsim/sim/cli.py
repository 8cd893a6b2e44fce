"""Command line entry points: run presets, print the radial oracle, validate."""

import argparse
import sys
import tempfile
from pathlib import Path

import numpy as np

from .. import physics, solver
from ..mesh import build_square_mesh
from ..physics import SimConfig
from ..radial import solve_radial
from . import initial, io, postproc, presets, runner


def _cmd_run(args):
    try:
        run_list = presets.preset(args.preset)
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return 2
    overrides = {}
    for item in args.override:
        if "=" not in item:
            print(f"override must look like key=value, got {item!r}",
                  file=sys.stderr)
            return 2
        key, text = item.split("=", 1)
        try:
            overrides[key.strip()] = io.coerce_field(key.strip(), text)
        except ValueError as exc:
            print(exc, file=sys.stderr)
            return 2
    if args.quarter:
        overrides["quarter"] = True
    if args.t_end is not None:
        overrides["T_end"] = args.t_end
    out = Path(args.out)
    for label, cfg in run_list:
        cfg = cfg.with_overrides(**overrides)
        dest = out if len(run_list) == 1 else out / label
        print(f"[{label}] running to t = {cfg.T_end:g} -> {dest}")
        try:
            state, trace = runner.run(cfg, dest)
        except solver.StepFailure as exc:
            print(f"[{label}] aborted: {exc}", file=sys.stderr)
            return 1
        print(f"[{label}] done: {len(trace) - 1} steps, "
              f"{state.ctx.n_vertices} vertices, "
              f"energy {trace[-1][-1]:.6g}")
    return 0


def _cmd_oracle(args):
    try:
        profile = solve_radial(args.R3, args.R2, args.Rout,
                               args.C, args.sigmaB, args.D)
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return 2
    radii = np.linspace(0.0, args.Rout, args.n)
    values = profile(radii)
    print("r,sigma")
    for r, v in zip(radii, values):
        print(f"{r:.17g},{v:.17g}")
    return 0


# ---------------------------------------------------------------- validation

def _check(condition, message):
    if not condition:
        raise AssertionError(message)


def _validate_initial_data():
    cfg = SimConfig(eps=0.35, h_f=0.25, h_c=0.5, delta2=0.1, m2=2,
                    delta3=0.05, m3=6)
    state = initial.initial_state(cfg)
    phi = state.phase.phi
    r = np.hypot(*state.mesh.vertices.T)
    _check(np.abs(phi.sum(axis=1) - 1.0).max() <= 1e-15
           and phi.min() >= 0.0, "initial data off the simplex")
    core = r < cfg.R3 - cfg.delta3 - cfg.eps * np.pi / 2
    _check(core.any() and np.abs(phi[core] - [0.0, 0.0, 1.0]).max() == 0.0,
           "core is not purely necrotic")
    far = r > cfg.R2 + cfg.delta2 + cfg.eps * np.pi / 2
    _check(far.any() and np.abs(phi[far] - [1.0, 0.0, 0.0]).max() == 0.0,
           "far field is not purely host")
    _check(np.abs(state.phase.mu).max() == 0.0, "potentials not zero")


def _validate_radius_extraction():
    cfg = SimConfig(eps=0.2, h_f=0.05, h_c=0.4, delta2=0.1, m2=2,
                    delta3=0.05, m3=6)
    state = initial.initial_state(cfg)
    sample = postproc.extract_radii(state.mesh, state.phase.phi, 64)
    _check(not sample.outer_absent and not sample.inner_absent,
           "interfaces reported absent on exact initial data")
    _check(abs(sample.mean_outer - cfg.R2) <= cfg.h_f,
           f"mean outer radius {sample.mean_outer:.4f} != {cfg.R2}")
    _check(abs(sample.mean_inner - cfg.R3) <= cfg.h_f,
           f"mean inner radius {sample.mean_inner:.4f} != {cfg.R3}")
    _check(abs(sample.amps_outer[cfg.m2 - 1] - cfg.delta2) <= cfg.h_f,
           "outer mode amplitude not recovered")
    _check(abs(sample.amps_inner[cfg.m3 - 1] - cfg.delta3) <= cfg.h_f,
           "inner mode amplitude not recovered")
    no_core = state.phase.phi.copy()
    no_core[:, 2] = 0.0
    gone = postproc.extract_radii(state.mesh, no_core, 64)
    _check(gone.inner_absent and np.isnan(gone.r_inner).all(),
           "vanished phase not reported absent")


def _validate_scalar_view():
    phi = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
                    [0.5, 0.5, 0.0]])
    view = postproc.scalar_view(phi)
    _check(np.array_equal(view, [0.0, 1.0, 2.0, 0.5]),
           "composite values wrong")
    rng = np.random.default_rng(7)
    phi = rng.dirichlet(np.ones(3), size=100)
    view = postproc.scalar_view(phi)
    _check(view.min() >= -1e-10 and view.max() <= 2.0 + 1e-10,
           "composite field out of range")


def _validate_vtk_roundtrip():
    mesh = build_square_mesh(1.0, 1.0, quarter=True)
    rng = np.random.default_rng(11)
    fields = [("a", rng.random(mesh.n_vertices)),
              ("b", rng.random(mesh.n_vertices))]
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "mesh.vtk"
        io.write_vtk(mesh, fields, path)
        verts, tris, back = io.read_vtk(path)
        _check(np.abs(verts - mesh.vertices).max() <= 1e-12,
               "coordinates did not round-trip")
        _check(np.array_equal(tris, mesh.triangles),
               "connectivity did not round-trip")
        _check(list(back) == ["a", "b"], "field order not preserved")
        for name, values in fields:
            _check(np.abs(back[name] - values).max() <= 1e-12,
                   f"field {name} did not round-trip")
        io.write_vtk(mesh, [], path)
        verts, tris, back = io.read_vtk(path)
        _check(len(back) == 0 and len(tris) == mesh.n_triangles,
               "geometry-only file invalid")


def _validate_csv_roundtrip():
    rows = [(0.1 * k, 1.0 + k, np.nan, *np.arange(8) * 0.5, -k)
            for k in range(4)]
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "trace.csv"
        io.write_csv(rows, path)
        back = io.read_csv(path)
        _check(back.shape == (4, 12), "row count wrong")
        want = np.array(rows)
        same = np.isclose(back, want, rtol=0, atol=0, equal_nan=True)
        _check(same.all(), "trace values did not round-trip")


def _validate_config_roundtrip():
    cfg = presets.preset("fig1")[0][1]
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "config.txt"
        io.write_config(cfg, path)
        _check(io.read_config(path) == cfg, "config did not round-trip")


def _validate_mobility():
    rng = np.random.default_rng(3)
    phi = rng.dirichlet(np.ones(3), size=200)
    c = physics.mobility(phi)
    _check(np.abs(c - np.swapaxes(c, -1, -2)).max() <= 1e-15,
           "mobility not symmetric")
    _check(np.abs(c.sum(axis=-1)).max() <= 1e-15,
           "mobility rows do not sum to zero")
    _check(np.linalg.eigvalsh(c).min() >= -1e-12,
           "mobility not positive semidefinite")
    host = physics.mobility(np.array([1.0, 0.0, 0.0]), delta=1e-6)
    limit = 1e-6 * (np.eye(3) - np.full((3, 3), 1.0 / 3.0))
    _check(np.abs(host - limit).max() <= 1e-18,
           "pure-host mobility limit wrong")


def _validate_deterministic_run():
    cfg = SimConfig(
        eps=0.35, h_f=0.25, h_c=0.5, tau=1e-3, T_end=0.005, cadence=0.002,
        K=0.01, variant="C", consumption=2.0, prolif=0.5, apoptosis=0.5,
        lam=0.1, chi_phi=0.1, sigma_B=5.0, n_rays=64)
    with tempfile.TemporaryDirectory() as tmp:
        out = [Path(tmp) / "r1", Path(tmp) / "r2"]
        states = [runner.run(cfg, o)[0] for o in out]
        first = (out[0] / "trace.csv").read_bytes()
        second = (out[1] / "trace.csv").read_bytes()
        _check(first == second, "reruns differ")
        phi = states[0].phase.phi
        _check(phi.min() >= -1e-10, "phase fractions went negative")
        _check(np.abs(phi.sum(axis=1) - 1.0).max() <= 1e-10,
               "phase fractions left the simplex")
        ticks = sorted(out[0].glob("fields_*.vtk"))
        _check(len(ticks) == 3, f"expected 3 snapshots, got {len(ticks)}")


_CHECKS = [
    ("initial data on the simplex with exact bulk values",
     _validate_initial_data),
    ("radius and mode-amplitude extraction on analytic data",
     _validate_radius_extraction),
    ("composite scalar view values and range", _validate_scalar_view),
    ("VTK writer round-trip", _validate_vtk_roundtrip),
    ("CSV trace round-trip", _validate_csv_roundtrip),
    ("config file round-trip", _validate_config_roundtrip),
    ("mobility tensor identities", _validate_mobility),
    ("short run determinism and simplex bounds",
     _validate_deterministic_run),
]


def _cmd_validate(args):
    failures = 0
    for name, fn in _CHECKS:
        try:
            fn()
        except Exception as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok   {name}")
    if failures:
        print(f"{failures} of {len(_CHECKS)} checks failed")
        return 1
    print(f"all {len(_CHECKS)} checks passed")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="chdsim",
        description="Adaptive finite element simulator for three-phase "
                    "tumour growth with nutrient transport")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a named preset")
    p_run.add_argument("--preset", required=True,
                       help="one of: " + ", ".join(presets.preset_names()))
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--quarter", action="store_true",
                       help="force the quarter domain")
    p_run.add_argument("--t-end", type=float, default=None,
                       help="override the final time")
    p_run.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override any config field (repeatable)")

    p_oracle = sub.add_parser(
        "oracle", help="print the semi-analytic radial nutrient profile")
    p_oracle.add_argument("--R3", type=float, required=True)
    p_oracle.add_argument("--R2", type=float, required=True)
    p_oracle.add_argument("--Rout", type=float, required=True)
    p_oracle.add_argument("--C", type=float, required=True,
                          help="consumption rate")
    p_oracle.add_argument("--sigmaB", type=float, required=True,
                          help="boundary nutrient value")
    p_oracle.add_argument("--D", type=float, default=1.0,
                          help="diffusivity")
    p_oracle.add_argument("--n", type=int, default=201,
                          help="number of radial samples")

    sub.add_parser("validate", help="run the built-in property checks")

    args = parser.parse_args(argv)
    handler = {"run": _cmd_run, "oracle": _cmd_oracle,
               "validate": _cmd_validate}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
