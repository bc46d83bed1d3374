"""Command-line front end: ``refractor-forge <command> --scene FILE ...``.

Exit codes: 0 success, 2 configuration error, 3 non-convergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .exceptions import ConfigError, NonConvergence, NumericalError
from .geometry import PlanarDomain
from .refractor import PlaneScreen, validate_scene
from .solver import SolveOptions, solve_dirac, solve_general
from . import verify

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4


def _out_prefix(args, default: str) -> Path:
    return Path(args.out) if args.out else Path(args.scene).with_suffix("").with_name(Path(args.scene).stem + default)


def _solve_doc(scene_doc: dict, log):
    """Solve a scene document; returns the solution document."""
    scene = io.parse_scene(scene_doc)
    opts = SolveOptions.from_dict(scene.solver)
    if scene.mode == "ma_bvp" and opts.b1 is None:
        opts = SolveOptions.from_dict({**scene.solver, "b1": 0.0})
    if scene.density_grid:
        gen = scene_doc.get("general") or {}
        if "X0" not in gen:
            raise ConfigError("density targets need general.X0 (anchor point)", assumption="anchor")
        sizes = gen.get("sizes", [4, 16, 64])
        result = solve_general(scene, sizes, gen["X0"], opts)
        refr, rep = result.refractors[-1], result.reports[-1]
        log(f"solved {len(sizes)} stages; sup differences {result.sup_differences}")
        return io.solution_document(scene_doc, refr, rep, {"general": result.to_dict()}), rep
    if opts.b1 is None:
        raise ConfigError("solver.b1 (anchor parameter) is required", assumption="anchor")
    refr, rep = solve_dirac(scene, scene.family(), opts)
    log(f"converged in {rep.iterations} steps, {rep.evaluations} mass evaluations; max deficit {rep.max_deficit:.3e}")
    return io.solution_document(scene_doc, refr, rep), rep


def _load_solution(path, log):
    doc = io.load_json(path)
    if io.is_solution(doc):
        return doc
    log("input is a scene; solving it first")
    sol, _ = _solve_doc(doc, log)
    return sol


def cmd_validate(args, log) -> int:
    scene = io.load_scene(args.scene)
    report = validate_scene(scene)
    for line in report.lines():
        log(line)
    log("scene valid")
    return EXIT_OK


def cmd_solve(args, log) -> int:
    doc = io.load_json(args.scene)
    sol, rep = _solve_doc(doc, log)
    prefix = _out_prefix(args, "_solution")
    io.dump_json(sol, f"{prefix}.json")
    io.write_csv(f"{prefix}_history.csv", ["iteration", "max_abs_deficit"], [[i, float(h)] for i, h in enumerate(rep.history)])
    log(f"wrote {prefix}.json and {prefix}_history.csv")
    return EXIT_OK


def cmd_verify(args, log) -> int:
    sol = _load_solution(args.scene, log)
    scene, refr = io.refractor_from_solution(sol)
    screen = scene.effective_screen()
    if args.capture is not None:
        cap = args.capture
    elif scene.near_field:
        cap = 1e-6 * float(np.max(np.linalg.norm(refr.targets, axis=1)))
    else:
        cap = 1e-6
    rt = verify.raytrace(refr, n_rays=args.rays, capture_radius=cap, seed=args.seed, screen=screen)
    prefix = _out_prefix(args, "_verify")
    doc = rt.to_dict()
    doc["capture_radius"] = cap
    doc["solver_masses"] = sol["masses"]
    io.dump_json(doc, f"{prefix}.json")
    rows = [
        [i, *map(float, refr.targets[i]), float(sol["weights"][i]), float(sol["masses"][i]), float(rt.hit_mass[i])]
        for i in range(refr.size)
    ]
    header = ["target"] + [f"p{j + 1}" for j in range(refr.targets.shape[1])] + ["weight", "solver_mass", "traced_mass"]
    io.write_csv(f"{prefix}.csv", header, rows)
    total = rt.total_energy
    log(f"traced {rt.n_rays} rays: miss {rt.miss_mass / total:.3e}, TIR {rt.tir_mass / total:.3e} of total energy")
    log(f"wrote {prefix}.json and {prefix}.csv")
    return EXIT_OK


def cmd_export(args, log) -> int:
    sol = _load_solution(args.scene, log)
    _, refr = io.refractor_from_solution(sol)
    prefix = _out_prefix(args, "_surface")
    fmt = args.format
    if fmt == "csv":
        header, rows = io.surface_table(refr, args.resolution)
        path = f"{prefix}.csv"
        io.write_csv(path, header, rows)
    else:
        verts, faces = io.surface_mesh(refr, args.resolution)
        path = f"{prefix}.{fmt}"
        (io.write_obj if fmt == "obj" else io.write_ply)(path, verts, faces)
    log(f"wrote {path}")
    return EXIT_OK


def cmd_residual(args, log) -> int:
    sol = _load_solution(args.scene, log)
    scene, refr = io.refractor_from_solution(sol)
    if isinstance(scene.domain, PlanarDomain) or scene.n != 3 or not scene.near_field:
        raise ConfigError("the residual check needs a 3D near-field refractor", assumption="mode")
    h = args.h
    grid = verify.projected_grid(scene.domain, args.resolution)
    smooth = np.ones(len(grid), dtype=bool)
    for i, p in enumerate(grid):
        try:
            verify._check_smooth(refr, p[None, :], h)
        except ConfigError:
            smooth[i] = False
    grid = grid[smooth]
    if len(grid) == 0:
        raise ConfigError("no grid point lies in a single-block region", assumption="smoothness")
    g = verify.estimate_plane_density(refr, args.rays, args.seed, PlaneScreen(np.array([0.0, 0.0, 1.0]), 0.0))
    field = verify.ma_residual(refr, grid=grid, h_fd=h, g_estimator=g)
    prefix = _out_prefix(args, "_residual")
    rows = [
        [float(p[0]), float(p[1]), float(z[0]), float(z[1]), float(d), float(gv), float(fv), float(r), int(ok)]
        for p, z, d, gv, fv, r, ok in zip(field.points, field.Z, field.det_dz, field.g, field.f, field.residual, field.interior)
    ]
    io.write_csv(f"{prefix}.csv", ["x1", "x2", "z1", "z2", "det_dz", "g", "f", "residual", "interior"], rows)
    log(f"{int(field.interior.sum())} interior points; {field.pass_fraction():.1%} within 5% relative residual")
    log(f"skipped {int((~smooth).sum())} points near ridges; wrote {prefix}.csv")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "export": cmd_export,
    "residual": cmd_residual,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="refractor-forge", description="Design and verify freeform refractors.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--scene", required=True, help="scene JSON (or solution JSON for verify/export/residual)")
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--rays", type=int, default=1_000_000, help="Monte-Carlo rays")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["obj", "ply", "csv"], default="obj")
    p.add_argument("--resolution", type=int, default=1000, help="mesh vertices or residual grid points")
    p.add_argument("--capture", type=float, default=None, help="capture radius for verify")
    p.add_argument("--h", type=float, default=1e-3, help="finite-difference step for residual")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def log(msg):
        print(msg)

    def err(msg):
        print(msg, file=sys.stderr)

    try:
        return COMMANDS[args.command](args, log)
    except ConfigError as exc:
        err(f"error: {exc}")
        return EXIT_CONFIG
    except NonConvergence as exc:
        err(f"error: {exc}")
        return EXIT_NONCONVERGENCE
    except NumericalError as exc:
        err(f"error: {exc}")
        return EXIT_NONCONVERGENCE
    except (OSError, json.JSONDecodeError) as exc:
        err(f"error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
