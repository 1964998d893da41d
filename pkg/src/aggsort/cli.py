"""Command-line entry point: ``aggsort <command> ...``."""

from __future__ import annotations

import argparse
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import camera, dataset, geometry, handeye, kinematics, sizing, stereo
from .simulator import config as simconfig
from .simulator import experiment, report


def data_path(name: str) -> Path:
    """Path of a file shipped in the package's ``data`` directory."""
    return Path(str(resources.files("aggsort") / "data" / name))


def _fmt_matrix(M) -> str:
    return "\n".join(" ".join(f"{v: .6f}" for v in row) for row in np.asarray(M))


def _chain(arg: str) -> kinematics.DhChain:
    return kinematics.load_chain(arg)


# -- fk / ik ----------------------------------------------------------------


def cmd_fk(args) -> int:
    chain = _chain(args.profile)
    q = kinematics.deg(args.joints) if not args.radians else np.asarray(args.joints, dtype=float)
    T = kinematics.forward_kinematics(chain, q)
    print(_fmt_matrix(T.matrix))
    p = T.translation
    print(f"position: {p[0]:.6f} {p[1]:.6f} {p[2]:.6f}  (|p| = {np.linalg.norm(p):.6f} m)")
    return 0


def cmd_ik(args) -> int:
    chain = _chain(args.profile)
    if args.pose:
        target = geometry.RigidTransform.from_matrix(np.array(args.pose, dtype=float).reshape(4, 4), tol=args.tol)
    else:
        x, y, z = args.xyz
        target = geometry.RigidTransform.from_rt(geometry.rot_z(math.radians(args.yaw)) @ kinematics.FLIP, (x, y, z))
    sols = kinematics.inverse_kinematics(chain, target)
    if not sols:
        print(f"no solution: {sols.reason.value}", file=sys.stderr)
        return 2
    for s in sols:
        print(" ".join(f"{v:.6f}" for v in np.degrees(s.q)) + f"  # elbow {s.elbow:+d} base {s.base:+d}")
    return 0


# -- calibration ------------------------------------------------------------


def cmd_calibrate(args) -> int:
    if args.tables:
        tables = camera.load_stereo_tables(args.tables)
        print(f"reprojection error: {tables.reprojection_error} px "
              f"({'passes' if camera.passes_gate(tables.reprojection_error) else 'fails'} the "
              f"{camera.CALIBRATION_GATE_PX} px gate)")
        M = np.eye(4)
        M[:3, :3] = tables.rotation
        rep = geometry.validate_rigid(M, geometry.INGESTED_TOL)
        print(f"rotation orthonormality residual: {rep.orthonormality_residual:.3g} "
              f"({'rigid' if rep.passed else 'NOT rigid'} at {geometry.INGESTED_TOL:g})")
        print(f"baseline: {np.linalg.norm(tables.translation_mm) / 1000.0:.6f} m")
        return 0 if rep.passed else 1
    intr = camera.Intrinsics(args.fx, args.fy or args.fx, args.cx, args.cy)
    dist = camera.Distortion(*args.dist)
    target = camera.PlanarTarget(args.rows, args.cols, args.square)
    poses = camera.orbit_poses(args.views, seed=args.seed)
    views = camera.synthesize_target_views(target, poses, intr, dist, args.noise, seed=args.seed)
    res = camera.calibrate_planar(views)
    text = camera.format_calibration(res)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    i = res.intrinsics
    print(f"fx {i.fx:.6f} fy {i.fy:.6f} cx {i.cx:.6f} cy {i.cy:.6f}")
    d = res.distortion
    print(f"k1 {d.k1:.6g} k2 {d.k2:.6g} p1 {d.p1:.6g} p2 {d.p2:.6g}")
    ok = camera.passes_gate(res.rms_reprojection)
    print(f"rms reprojection {res.rms_reprojection:.6g} px: {'PASS' if ok else 'FAIL'} (gate {camera.CALIBRATION_GATE_PX} px)")
    return 0 if ok else 1


def cmd_handeye(args) -> int:
    if args.pairs:
        pairs = handeye.load_pairs(Path(args.pairs).read_text(encoding="utf-8"))
    else:
        rng = np.random.default_rng(args.seed)
        X = geometry.random_transform(rng, 0.1)
        robot, cam = handeye.synthesize_pairs(X, args.synthetic + 1, rng, noise_rot=args.noise_rot,
                                              noise_trans=args.noise_trans)
        pairs = handeye.collect_motion_pairs(robot, cam)
        print("ground truth:")
        print(_fmt_matrix(X.matrix))
    if len(pairs) < handeye.RECOMMENDED_MIN_PAIRS:
        print(f"warning: only {len(pairs)} pairs; at least {handeye.RECOMMENDED_MIN_PAIRS} recommended", file=sys.stderr)
    sol = handeye.solve_hand_eye(pairs, method=args.method)
    print("T_CE:")
    print(_fmt_matrix(sol.T_CE.matrix))
    print(f"max residual: rotation {sol.rotation_residual:.3g} rad, translation {sol.translation_residual:.3g} m")
    if args.out:
        handeye.write_solution(args.out, sol)
    return 0


# -- stereo / sizing --------------------------------------------------------


def cmd_stereo(args) -> int:
    if args.demo_shift is not None:
        left, right = stereo.textured_pair((args.height, args.width), args.demo_shift, seed=args.seed)
    else:
        if not (args.left and args.right):
            print("need LEFT and RIGHT images, or --demo-shift", file=sys.stderr)
            return 2
        left, right = stereo.read_pgm(args.left), stereo.read_pgm(args.right)
    params = stereo.MatchParams(aggregate_radius=args.aggregate)
    disp = stereo.compute_disparity(left, right, args.dmax, params, workers=args.workers)
    valid = disp.valid
    print(f"valid pixels: {int(valid.sum())} / {valid.size}")
    if valid.any():
        vals, counts = np.unique(disp.disparity[valid], return_counts=True)
        print(f"modal disparity: {int(vals[np.argmax(counts)])} px")
    if args.out:
        stereo.write_disparity_pgm(args.out, disp)
    if args.depth_out:
        if args.fx is None or args.baseline is None:
            print("--depth-out needs --fx and --baseline", file=sys.stderr)
            return 2
        stereo.write_depth_grid(args.depth_out, stereo.depth_map(disp, args.fx, args.baseline, None))
    return 0


def cmd_size(args) -> int:
    x1, y1, x2, y2 = args.corners
    px = sizing.mer_dimensions((x1, y1), (x2, y2))
    if args.depth is not None:
        m = sizing.measure_box((x1, y1), (x2, y2), args.depth, args.fx)
        a_cm, b_cm, c_cm = 100 * m.a, 100 * m.b, 100 * m.c
    else:
        a_cm, b_cm, c_cm = px.a, px.b, px.c
    verdict = sizing.assess(c_cm)
    print(f"pixels: a {px.a:g} b {px.b:g} c {px.c:g}")
    if args.depth is not None:
        print(f"cm:     a {a_cm:.4f} b {b_cm:.4f} c {c_cm:.4f}")
    print(f"grade: {verdict.grade}" + (" (oversize)" if verdict.oversize else ""))
    return 0


# -- dataset ----------------------------------------------------------------


def _read_list(path: str) -> list[str]:
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def cmd_dataset_verify(args) -> int:
    if args.images_dir:
        imgs, labs = dataset.list_directory(args.images_dir, args.labels_dir or args.images_dir)
    else:
        imgs, labs = _read_list(args.image_list), _read_list(args.label_list)
    rep = dataset.verify_dataset(imgs, labs)
    sys.stdout.write(rep.render())
    return 0 if rep.passed else 1


# -- simulation -------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = simconfig.load_config(args.config) if args.config else simconfig.SimConfig()
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    if args.trials > 1:
        cfgs = [cfg.with_(seed=cfg.seed + k) for k in range(args.trials)]
        for k, text in enumerate(experiment.run_many(cfgs, args.workers, args.format)):
            print(f"# trial {k} seed {cfgs[k].seed}")
            sys.stdout.write(text)
        return 0
    res = experiment.run_experiment(cfg)
    sys.stdout.write(report.render_report(res.report, args.format))
    if args.log and res.final_state is not None:
        Path(args.log).write_text("\n".join(res.final_state.log) + "\n", encoding="utf-8")
    return 0


def cmd_report(args) -> int:
    path = args.replay or data_path("grasping_replay.txt")
    rep = experiment.tally_replay(experiment.load_replay(path))
    sys.stdout.write(report.render_report(rep, args.format))
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aggsort", description="Aggregate-sorting arm toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    fk = sub.add_parser("fk", help="forward kinematics")
    fk.add_argument("joints", nargs=5, type=float, help="joint angles (degrees unless --radians)")
    fk.add_argument("--profile", default="jetarm", help="profile name or DH file")
    fk.add_argument("--radians", action="store_true")
    fk.set_defaults(func=cmd_fk)

    ik = sub.add_parser("ik", help="inverse kinematics for a downward tool pose")
    g = ik.add_mutually_exclusive_group(required=True)
    g.add_argument("--xyz", nargs=3, type=float, metavar=("X", "Y", "Z"))
    g.add_argument("--pose", nargs=16, type=float, metavar="M", help="row-major 4x4 target")
    ik.add_argument("--yaw", type=float, default=0.0, help="tool yaw in degrees (with --xyz)")
    ik.add_argument("--tol", type=float, default=geometry.INGESTED_TOL, help="rigidity tolerance for --pose")
    ik.add_argument("--profile", default="jetarm")
    ik.set_defaults(func=cmd_ik)

    cal = sub.add_parser("calibrate", help="synthetic planar calibration, or check reference stereo tables")
    cal.add_argument("--tables", help="stereo table fixture to parse and validate")
    cal.add_argument("--views", type=int, default=20)
    cal.add_argument("--noise", type=float, default=0.5, help="pixel noise sigma")
    cal.add_argument("--seed", type=int, default=0)
    cal.add_argument("--fx", type=float, default=800.0)
    cal.add_argument("--fy", type=float, default=None)
    cal.add_argument("--cx", type=float, default=320.0)
    cal.add_argument("--cy", type=float, default=240.0)
    cal.add_argument("--dist", nargs=4, type=float, default=(0.0, 0.0, 0.0, 0.0), metavar=("K1", "K2", "P1", "P2"))
    cal.add_argument("--rows", type=int, default=9)
    cal.add_argument("--cols", type=int, default=6)
    cal.add_argument("--square", type=float, default=0.027)
    cal.add_argument("--out")
    cal.set_defaults(func=cmd_calibrate)

    he = sub.add_parser("handeye", help="solve AX = XB for the camera mount")
    he.add_argument("--pairs", help="file with alternating A/B transform lines")
    he.add_argument("--synthetic", type=int, default=10, help="number of synthetic pairs when no file is given")
    he.add_argument("--noise-rot", type=float, default=0.0)
    he.add_argument("--noise-trans", type=float, default=0.0)
    he.add_argument("--method", choices=("tsai", "kabsch"), default="tsai")
    he.add_argument("--seed", type=int, default=0)
    he.add_argument("--out")
    he.set_defaults(func=cmd_handeye)

    st = sub.add_parser("stereo", help="disparity from a rectified PGM pair")
    st.add_argument("left", nargs="?")
    st.add_argument("right", nargs="?")
    st.add_argument("--dmax", type=int, default=32)
    st.add_argument("--aggregate", type=int, default=0, help="box aggregation radius (0 = off)")
    st.add_argument("--workers", type=int, default=1)
    st.add_argument("--demo-shift", type=int, default=None, help="match a synthetic pair shifted by this many px")
    st.add_argument("--width", type=int, default=320)
    st.add_argument("--height", type=int, default=240)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", help="disparity PGM (255 = invalid)")
    st.add_argument("--depth-out", help="depth grid text file")
    st.add_argument("--fx", type=float)
    st.add_argument("--baseline", type=float)
    st.set_defaults(func=cmd_stereo)

    sz = sub.add_parser("size", help="box dimensions and grade")
    sz.add_argument("corners", nargs=4, type=float, metavar=("X1", "Y1", "X2", "Y2"))
    sz.add_argument("--depth", type=float, help="depth at the box center in meters")
    sz.add_argument("--fx", type=float, default=1000.0)
    sz.set_defaults(func=cmd_size)

    ds = sub.add_parser("dataset", help="dataset utilities")
    dsub = ds.add_subparsers(dest="dataset_command", required=True)
    ver = dsub.add_parser("verify", help="check image/label pairing and order")
    ver.add_argument("--images-dir")
    ver.add_argument("--labels-dir")
    ver.add_argument("--image-list")
    ver.add_argument("--label-list")
    ver.set_defaults(func=cmd_dataset_verify)

    sim = sub.add_parser("simulate", help="run a sorting simulation")
    sim.add_argument("--config", help="key = value config file")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--format", choices=("table", "csv"), default="table")
    sim.add_argument("--trials", type=int, default=1)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--log", help="write the phase log here")
    sim.set_defaults(func=cmd_simulate)

    rp = sub.add_parser("report", help="tally a replay file")
    rp.add_argument("--replay", help="replay file (defaults to the bundled grasping-table fixture)")
    rp.add_argument("--format", choices=("table", "csv"), default="table")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "dataset" and args.func is cmd_dataset_verify:
        if not args.images_dir and not (args.image_list and args.label_list):
            parser.error("dataset verify needs --images-dir or both --image-list and --label-list")
    try:
        return int(args.func(args) or 0)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
