"""Time-loop driver: output scheduling, trace assembly, failure dumps."""

from pathlib import Path

from .. import fem, solver
from . import initial, io, postproc


def trace_row(state, cfg):
    """One trace entry: time, mean radii, outer mode amplitudes, energy."""
    sample = postproc.extract_radii(state.mesh, state.phase.phi, cfg.n_rays)
    energy = fem.discrete_energy(
        state.ctx, state.phase.phi, state.flow.sigma, cfg.beta, cfg.eps,
        chi_sigma=cfg.chi_sigma, chi_phi=cfg.chi_phi)
    return (state.time, sample.mean_inner, sample.mean_outer,
            *sample.amps_outer, energy)


def _write_fields(state, cfg, out, tag):
    fields = [("phase", postproc.scalar_view(state.phase.phi)),
              ("sigma", state.flow.sigma)]
    if cfg.K > 0.0:
        fields.append(("pressure", state.flow.p))
    io.write_vtk(state.mesh, fields, out / f"fields_{tag}.vtk")


def run(cfg, out_dir):
    """Run one configured simulation, writing its outputs under ``out_dir``.

    Writes ``config.txt``, VTK field snapshots at t=0 and every output
    cadence tick, and ``trace.csv`` with one row per time step plus the
    initial one.  Everything is deterministic for a fixed config.  A solver
    failure still flushes the trace and dumps the last complete state
    before the failure propagates (it carries the failing step index).
    Returns the final state and the list of trace rows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_config(cfg, out / "config.txt")
    state = initial.initial_state(cfg)
    n_steps = int(round(cfg.T_end / cfg.tau))
    tick = max(1, int(round(cfg.cadence / cfg.tau)))
    trace = [trace_row(state, cfg)]
    _write_fields(state, cfg, out, "0000")
    try:
        for k in range(1, n_steps + 1):
            state = solver.advance(state, cfg)
            trace.append(trace_row(state, cfg))
            if k % tick == 0:
                _write_fields(state, cfg, out, f"{k // tick:04d}")
    except solver.StepFailure:
        io.write_csv(trace, out / "trace.csv")
        _write_fields(state, cfg, out, "failed")
        raise
    io.write_csv(trace, out / "trace.csv")
    return state, trace
