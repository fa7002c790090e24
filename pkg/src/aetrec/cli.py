"""Command line entry points: simulate, reconstruct, verify, mesh-info.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 verification failure.  Every output directory receives the
exact config text, the code version, and all seeds, so any run can be
replayed from its artifacts alone.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import (__version__, config as cfgmod, fem, forward, io, lm,
               mesh as meshmod, phantom, plots, sparse, verify)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; remap onto exit code 1
    def error(self, message):
        raise cfgmod.ConfigError(message)


def build_parser():
    parser = _Parser(prog="aetrec",
                     description="power-density conductivity reconstruction")
    parser.add_argument("--version", action="version",
                        version=f"aetrec {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_sim = sub.add_parser("simulate", help="generate measurement data")
    p_sim.add_argument("--config", help="config file (defaults built in)")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, help="override noise.seed")

    p_rec = sub.add_parser("reconstruct", help="run the outer iteration")
    p_rec.add_argument("data_dir", help="directory produced by simulate")
    p_rec.add_argument("--config",
                       help="config file (default: data_dir/config.txt)")
    p_rec.add_argument("--out", required=True, help="output directory")
    p_rec.add_argument("--seed", type=int, help="override noise.seed")
    p_rec.add_argument("--adjoint", choices=("l2", "h1", "h2"),
                       help="override lm.adjoint")
    p_rec.add_argument("--measurements",
                       help="comma-separated measurement indices to keep")

    p_ver = sub.add_parser("verify", help="run the oracle suite")
    p_ver.add_argument("--out", help="directory for report files")
    p_ver.add_argument("--seed", type=int, default=0)

    p_info = sub.add_parser("mesh-info", help="print mesh statistics")
    p_info.add_argument("--config", help="config file supplying mesh.n_rings")
    p_info.add_argument("--rings", type=int, help="explicit ring count")
    return parser


def _load_config(path, seed=None, adjoint_tag=None):
    if path is None:
        cfg = cfgmod.parse_config(cfgmod.default_config_text())
    else:
        cfg = cfgmod.load_config(path)
    return cfgmod.apply_overrides(cfg, seed=seed, adjoint=adjoint_tag)


def _write_config_echo(out_dir, cfg):
    text = cfg.raw_text if cfg.raw_text else cfgmod.default_config_text()
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(text)


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def cmd_simulate(args):
    cfg = _load_config(args.config, seed=args.seed)
    out_dir = io.ensure_dir(args.out)
    mesh = meshmod.build_disk_mesh(cfg.n_rings())
    geom = meshmod.element_geometry(mesh)
    spec = cfg.phantom_spec()
    bcs = cfg.bcs()
    std = cfg["noise.std"]
    seed = cfg["noise.seed"]
    exact, noisy = forward.simulate_measurements(
        mesh, geom, lambda m: phantom.evaluate_phantom(spec, m), bcs,
        sim_n_rings=cfg.sim_n_rings(), noise_std=std, noise_seed=seed)

    _write_config_echo(out_dir, cfg)
    meshmod.write_mesh_file(mesh, os.path.join(out_dir, "mesh.txt"))
    io.write_field_csv(os.path.join(out_dir, "sigma_true.csv"), mesh,
                       phantom.evaluate_phantom(spec, mesh))
    files = {"mesh": "mesh.txt", "sigma_true": "sigma_true.csv",
             "exact": [], "noisy": []}
    for j in range(exact.m):
        name = f"data_exact_{j:03d}.csv"
        io.write_field_csv(os.path.join(out_dir, name), mesh, exact.data[j])
        files["exact"].append(name)
    for j in range(noisy.m):
        name = f"data_noisy_{j:03d}.csv"
        io.write_field_csv(os.path.join(out_dir, name), mesh, noisy.data[j])
        files["noisy"].append(name)
    io.write_manifest(os.path.join(out_dir, "manifest.json"), {
        "kind": "simulate",
        "version": __version__,
        "n_rings": cfg.n_rings(),
        "sim_n_rings": cfg.sim_n_rings(),
        "bcs": cfg["bcs"],
        "noise_std": std,
        "noise_seed": seed,
        "overrides": cfg.overrides,
        "files": files,
    })
    print(f"simulated {exact.m} measurements into {out_dir}")
    return 0


def _parse_measurement_subset(text, m):
    try:
        indices = [int(t) for t in text.split(",") if t.strip() != ""]
    except ValueError as exc:
        raise cfgmod.ConfigError(f"bad --measurements {text!r}: {exc}")
    if not indices:
        raise cfgmod.ConfigError("--measurements selected nothing")
    for i in indices:
        if not 0 <= i < m:
            raise cfgmod.ConfigError(f"measurement index {i} out of range "
                                     f"(have {m})")
    if len(set(indices)) != len(indices):
        raise cfgmod.ConfigError("--measurements has duplicate indices")
    return indices


def cmd_reconstruct(args):
    data_dir = args.data_dir
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise cfgmod.ConfigError(f"no manifest.json in {data_dir}")
    manifest = io.read_manifest(manifest_path)
    cfg_path = args.config or os.path.join(data_dir, "config.txt")
    cfg = _load_config(cfg_path, seed=args.seed, adjoint_tag=args.adjoint)

    mesh = meshmod.build_disk_mesh(cfg.n_rings())
    if manifest.get("n_rings") != mesh.n_rings:
        raise cfgmod.ConfigError(
            f"data mesh has {manifest.get('n_rings')} rings, config wants "
            f"{mesh.n_rings}")
    geom = meshmod.element_geometry(mesh)
    bcs = cfg.bcs()
    noisy_files = manifest.get("files", {}).get("noisy", [])
    if len(noisy_files) != len(bcs):
        raise cfgmod.ConfigError(
            f"{len(noisy_files)} data files vs {len(bcs)} configured "
            "boundary conditions")
    data = []
    for name in noisy_files:
        path = os.path.join(data_dir, name)
        if not os.path.isfile(path):
            raise cfgmod.ConfigError(f"missing data file {path}")
        _, values = io.read_field_csv(path)
        if values.shape[0] != mesh.n_nodes:
            raise cfgmod.ConfigError(f"data file {path} does not match mesh")
        data.append(values)
    measurements = forward.MeasurementSet(
        mesh=mesh, bcs=bcs, data=data,
        noise_std=manifest.get("noise_std", 0.0),
        noise_seed=manifest.get("noise_seed"))
    if args.measurements is not None:
        subset = _parse_measurement_subset(args.measurements, measurements.m)
        measurements = measurements.subset(subset)

    sigma_true = None
    truth_path = os.path.join(data_dir, "sigma_true.csv")
    if os.path.isfile(truth_path):
        _, sigma_true = io.read_field_csv(truth_path)

    out_dir = io.ensure_dir(args.out)
    _write_config_echo(out_dir, cfg)
    log_path = os.path.join(out_dir, "iterations.jsonl")
    with open(log_path, "w"):
        pass

    def log_iteration(rec):
        io.append_jsonl(log_path, {
            "k": rec.k, "alpha": rec.alpha, "residual": rec.residual,
            "step_norm": rec.step_norm,
            "rel_error": _jsonable(rec.rel_error),
            "seconds": rec.seconds})

    lm_cfg = cfg.lm_config()
    state = lm.run_lm(mesh, geom, measurements, lm_cfg,
                      sigma_true=sigma_true, on_iteration=log_iteration)

    sigma_final = state.sigma.values
    io.write_field_csv(os.path.join(out_dir, "sigma_final.csv"), mesh,
                       sigma_final)
    mass = fem.assemble_mass(mesh, geom)
    ordered = lm.canonical_order(measurements)
    final = forward.forward_map(mesh, geom, state.sigma, ordered.bcs)
    final_res = lm.residual_norm(
        mass, [ordered.data[j] - final.data[j] for j in range(ordered.m)])
    metrics = {
        "iterations": state.k,
        "final_residual": final_res,
        "final_rel_error": None,
        "adjoint": lm_cfg.adjoint,
        "n_rings": mesh.n_rings,
        "measurements": measurements.m,
    }
    emit = cfg.emit()
    if sigma_true is not None:
        diff = np.abs(sigma_final - sigma_true)
        io.write_field_csv(os.path.join(out_dir, "difference.csv"), mesh,
                           diff)
        metrics["final_rel_error"] = lm.relative_l2_error(
            mass, sigma_final, sigma_true)
        if "png" in emit:
            plots.difference_png(os.path.join(out_dir, "difference.png"),
                                 mesh, diff)
    io.write_manifest(os.path.join(out_dir, "metrics.json"), metrics)
    if "vtk" in emit:
        fields = {"sigma_final": sigma_final}
        if sigma_true is not None:
            fields["difference"] = np.abs(sigma_final - sigma_true)
        io.write_vtk(os.path.join(out_dir, "fields.vtk"), mesh, fields)
    if "png" in emit:
        plots.sigma_png(os.path.join(out_dir, "sigma_final.png"), mesh,
                        sigma_final)
    io.write_manifest(os.path.join(out_dir, "manifest.json"), {
        "kind": "reconstruct",
        "version": __version__,
        "data_dir": os.path.abspath(data_dir),
        "n_rings": mesh.n_rings,
        "noise_seed": cfg["noise.seed"],
        "overrides": cfg.overrides,
        "measurements": measurements.m,
    })
    err = metrics["final_rel_error"]
    err_text = "n/a" if err is None else f"{err:.4f}"
    print(f"reconstructed in {state.k} iterations, residual "
          f"{final_res:.6e}, rel_error {err_text}")
    return 0


def cmd_verify(args):
    suite = verify.run_suite(seed=args.seed)
    report = verify.format_report(suite)
    if args.out:
        out_dir = io.ensure_dir(args.out)
        with open(os.path.join(out_dir, "report.txt"), "w") as fh:
            fh.write(report)
        io.write_manifest(os.path.join(out_dir, "report.json"), suite)
    sys.stdout.write(report)
    return 0 if suite["passed"] else 3


def cmd_mesh_info(args):
    if args.rings is not None:
        n_rings = args.rings
    else:
        cfg = _load_config(args.config)
        n_rings = cfg.n_rings()
    if n_rings < 1:
        raise cfgmod.ConfigError("ring count must be >= 1")
    mesh = meshmod.build_disk_mesh(n_rings)
    geom = meshmod.element_geometry(mesh)
    print(f"n_rings {mesh.n_rings}")
    print(f"nodes {mesh.n_nodes}")
    print(f"triangles {mesh.n_triangles}")
    print(f"boundary_nodes {len(mesh.boundary_nodes)}")
    print(f"total_area {geom.total_area:.17g}")
    print(f"max_edge {meshmod.max_edge_length(mesh):.17g}")
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        handler = {"simulate": cmd_simulate,
                   "reconstruct": cmd_reconstruct,
                   "verify": cmd_verify,
                   "mesh-info": cmd_mesh_info}[args.command]
        return handler(args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (sparse.SingularMatrixError, sparse.ResidualContractError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
