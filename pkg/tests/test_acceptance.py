"""End-to-end acceptance checks, one test per criterion.

Each test records a short detail string; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import filecmp
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from hybrid_icp.association import CorrespondenceSet, ObjectModel, Scene, SpatialIndex
from hybrid_icp.bench import parse_config, run_experiment, sample_initialisation, sample_object_pose
from hybrid_icp.bench.cli import main as bench_main
from hybrid_icp.geometry import CameraIntrinsics, OrientedPointCloud, builtin_mesh, mesh_diameter, render_depth
from hybrid_icp.hybrid import dynamic_switch, run_cascading_icp
from hybrid_icp.se3 import Pose, PoseWithCovariance, exp_map, fuse_estimates, rotation_error
from hybrid_icp.solvers import DIVERGED, solve_point_to_point
from hybrid_icp.vsd import DEFAULT_TAU_FRACTIONS, DistanceMap, mve, pose_vsd, vsd_error


def detail(record_property, text):
    record_property("detail", text)
    print(text)


# --- 1 ---------------------------------------------------------------------


@pytest.mark.criterion(1, "exact transform recovery")
def test_criterion_1_exact_transform_recovery(record_property):
    rng = np.random.default_rng(101)
    cases = []
    for _ in range(100):
        truth = Pose(Rotation.random(random_state=rng).as_matrix(), rng.normal(scale=0.5, size=3))
        o = rng.normal(size=(50, 3))
        n = np.zeros_like(o)
        cases.append((truth, CorrespondenceSet(o, n, truth.apply(o), n, 50)))
    t0 = time.perf_counter()
    estimates = [solve_point_to_point(cs) for _, cs in cases]
    elapsed = time.perf_counter() - t0
    rot = max(rotation_error(e.rotation, t.rotation) for e, (t, _) in zip(estimates, cases))
    trans = max(np.linalg.norm(e.translation - t.translation) for e, (t, _) in zip(estimates, cases))
    detail(record_property, f"max rot {rot:.1e} rad, max trans {trans:.1e} m, {elapsed:.3f} s")
    assert rot < 1e-9 and trans < 1e-9 and elapsed < 1.0


# --- 2 ---------------------------------------------------------------------


@pytest.mark.criterion(2, "MVE equals true mean VSD without noise")
def test_criterion_2_mve_identity(record_property):
    cam = CameraIntrinsics.default()
    rng = np.random.default_rng(202)
    meshes = [builtin_mesh(n) for n in ("sphere", "box", "cylinder")]
    worst, values = 0.0, []
    for k in range(50):
        mesh = meshes[k % 3]
        d = mesh_diameter(mesh)
        gt = sample_object_pose(d, "single_image", rng, mesh.center())
        est = sample_initialisation(gt, rng, max_translation=0.03)
        depth, mask = render_depth(mesh, gt, cam)
        e = mve(depth, mask, mesh, est, cam, d)
        true = pose_vsd(mesh, est, gt, cam, d)
        worst = max(worst, abs(e - true))
        values.append(true)
    detail(record_property, f"max |e_MVE - VSD| = {worst:.1e} over 50 scenes, VSD range {min(values):.2f}..{max(values):.2f}")
    assert worst < 1e-12


# --- 3 ---------------------------------------------------------------------


def brute_force_vsd(d_est, d_gt, m_est, m_gt, tau):
    union = hits = 0
    for i in range(m_est.shape[0]):
        for j in range(m_est.shape[1]):
            if m_est[i, j] or m_gt[i, j]:
                union += 1
                if m_est[i, j] and m_gt[i, j] and abs(d_est[i, j] - d_gt[i, j]) < tau:
                    hits += 1
    return 1.0 - hits / union


@pytest.mark.criterion(3, "VSD matches brute force and is monotone in tau")
def test_criterion_3_vsd_properties(record_property):
    rng = np.random.default_rng(303)
    diameter = 0.2
    taus = [f * diameter for f in DEFAULT_TAU_FRACTIONS]
    mismatches = violations = 0
    for _ in range(20):
        a, b = rng.uniform(0.5, 0.7, (16, 16)), rng.uniform(0.5, 0.7, (16, 16))
        ma, mb = rng.random((16, 16)) < 0.75, rng.random((16, 16)) < 0.75
        da, db = DistanceMap(a, ma), DistanceMap(b, mb)
        vals = []
        for tau in taus:
            v = vsd_error(da, db, ma, mb, tau)
            mismatches += v != brute_force_vsd(a, b, ma, mb, tau)
            vals.append(v)
        violations += sum(y > x for x, y in zip(vals, vals[1:]))
    detail(record_property, f"{mismatches} mismatches, {violations} monotonicity violations over 20 pairs x 10 tolerances")
    assert mismatches == 0 and violations == 0


# --- 4 ---------------------------------------------------------------------


@pytest.mark.criterion(4, "dynamic switching boundary")
def test_criterion_4_switch_boundary(record_property):
    got = [dynamic_switch(e, 0.4).method for e in (0.39, 0.40, 0.41)]
    detail(record_property, f"0.39/0.40/0.41 -> {'/'.join(got)}")
    assert got == ["projective", "nn", "nn"]


# --- 5 ---------------------------------------------------------------------


@pytest.mark.criterion(5, "cascading rollback and double fallback")
def test_criterion_5_cascading_rollback(record_property):
    cam = CameraIntrinsics.default()
    plate = builtin_mesh("plate")
    model = ObjectModel.from_mesh(plate)
    gt = Pose(Rotation.from_euler("xy", [13.4, 36.7], degrees=True).as_matrix(), np.array([0.0, 0.0, 0.35]))
    scene = Scene(*render_depth(plate, gt, cam), cam)
    init = exp_map([0.0255, 0.0149, 0.0216, -0.1517, -0.2153, 0.102]) @ gt
    res = run_cascading_icp(model, scene, init, "nn")
    stage1, stage2 = res.stages
    slid = stage2.status == DIVERGED and stage2.trace[-1].event in ("correspondence_drop", "loss_increase")
    rolled_back = np.array_equal(res.pose.matrix(), stage1.pose.matrix())

    sphere = builtin_mesh("sphere")
    sphere_model = ObjectModel.from_mesh(sphere)
    sgt = Pose.from_translation([0.0, 0.0, 0.4])
    depth, mask = render_depth(sphere, sgt, cam)
    empty = Scene(depth, np.zeros_like(mask), cam)
    t_init = Pose.from_translation([0.004, -0.002, 0.0]) @ sgt
    both = run_cascading_icp(sphere_model, empty, t_init, "projective")
    first_iteration = all(len(s.trace) == 1 and s.trace[0].event for s in both.stages)
    fallback = np.array_equal(both.pose.matrix(), t_init.matrix())

    detail(
        record_property,
        f"plate stage 2 '{stage2.trace[-1].event}' after {len(stage2.trace)} iterations, "
        f"pose == stage 1: {rolled_back}; empty scene returns t_init: {fallback}",
    )
    assert slid and rolled_back and first_iteration and fallback


# --- 6 and 7 ---------------------------------------------------------------

CRITERION_6_VARIANTS = ("hybrid", "nn_p2p", "proj_cascade_pp")
TREND_VARIANTS = CRITERION_6_VARIANTS + ("proj_p2l", "proj_p2p")


@pytest.fixture(scope="module")
def init_noise_report():
    cfg = parse_config(
        "experiment = init_noise\nmeshes = sphere, box, cylinder\n"
        f"variants = {', '.join(TREND_VARIANTS)}\nsamples_per_object = 10\nbins = 10\nseed = 2024\n"
    )
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    return report, time.perf_counter() - t0


@pytest.mark.slow
@pytest.mark.criterion(6, "hybrid post-VSD trend over pre-VSD bins")
def test_criterion_6_hybrid_trend(init_noise_report, record_property):
    report, elapsed = init_noise_report
    # proj_p2l and proj_p2p run only for criterion 7; their time is not part of this workload
    elapsed -= sum(report.variant_seconds[v] for v in TREND_VARIANTS if v not in CRITERION_6_VARIANTS)
    mean = {}
    for r in report.rows:
        mean.setdefault((int(r.level), r.variant), []).append(r.post_vsd)
    mean = {k: float(np.mean(v)) for k, v in mean.items()}
    bins = sorted({b for b, _ in mean})
    not_worse = [b for b in bins if mean[(b, "hybrid")] <= min(mean[(b, "nn_p2p")], mean[(b, "proj_cascade_pp")])]
    high = [b for b in bins if b >= 5]
    strictly = all(mean[(b, "hybrid")] < min(mean[(b, "nn_p2p")], mean[(b, "proj_cascade_pp")]) for b in high)
    table = "; ".join(
        f"{b}: {mean[(b, 'hybrid')]:.3f}/{mean[(b, 'nn_p2p')]:.3f}/{mean[(b, 'proj_cascade_pp')]:.3f}" for b in bins
    )
    detail(
        record_property,
        f"hybrid <= both in {len(not_worse)}/{len(bins)} bins, strictly lower above 0.5: {strictly}, "
        f"{elapsed:.0f} s, unfilled {report.unfilled or 'none'}; bin: hybrid/nn/cascade {table}",
    )
    assert len(bins) == 10 and not report.unfilled
    assert len(not_worse) >= 8 and strictly
    assert elapsed < 600


@pytest.mark.slow
@pytest.mark.criterion(7, "timing order p2l < p2p < NN < hybrid")
def test_criterion_7_timing_order(init_noise_report, record_property):
    report, _ = init_noise_report
    t = {v: float(np.mean(report.wall_times[v])) for v in ("proj_p2l", "proj_p2p", "nn_p2p", "hybrid")}
    detail(record_property, ", ".join(f"{v} {s * 1000:.1f} ms" for v, s in t.items()))
    assert t["proj_p2l"] < t["proj_p2p"] < t["nn_p2p"] < t["hybrid"]


# --- 8 ---------------------------------------------------------------------


@pytest.mark.criterion(8, "spatial index equals brute-force NN")
def test_criterion_8_nn_exact(record_property):
    rng = np.random.default_rng(808)
    wrong = 0
    for k in range(100):
        # every other instance lives on an integer grid to force distance ties
        grid = k % 2 == 1
        pts = rng.integers(-4, 5, size=(200, 3)).astype(float) if grid else rng.normal(size=(200, 3))
        q = rng.integers(-4, 5, size=(200, 3)).astype(float) if grid else rng.normal(size=(200, 3))
        cloud = OrientedPointCloud(pts, np.tile([0.0, 0.0, 1.0], (200, 1)))
        d, i = SpatialIndex(cloud).query(q)
        d2 = ((q[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        bi = d2.argmin(axis=1)
        wrong += int((i != bi).sum())
        wrong += int((np.abs(d - np.sqrt(d2[np.arange(200), bi])) > 1e-12 * np.maximum(1.0, d)).sum())
    detail(record_property, f"{wrong} disagreements over 100 instances x 200 queries")
    assert wrong == 0


# --- 9 ---------------------------------------------------------------------


@pytest.mark.criterion(9, "fusion matches scalar filter, permutation invariant")
def test_criterion_9_fusion_oracle(record_property):
    rng = np.random.default_rng(909)
    worst_closed = 0.0
    for axis in range(3):
        for _ in range(10):
            a, b = rng.uniform(-1, 1, 2)
            va, vb = rng.uniform(0.05, 2.0, 2)
            ta, tb = np.zeros(3), np.zeros(3)
            ta[axis], tb[axis] = a, b
            fused = fuse_estimates(
                [PoseWithCovariance(Pose.from_translation(ta), va * np.eye(6)), PoseWithCovariance(Pose.from_translation(tb), vb * np.eye(6))]
            )
            expected = (a / va + b / vb) / (1 / va + 1 / vb)
            worst_closed = max(worst_closed, abs(fused.pose.translation[axis] - expected))
            worst_closed = max(worst_closed, float(np.abs(np.delete(fused.pose.translation, axis)).max()))
            worst_closed = max(worst_closed, rotation_error(fused.pose.rotation, np.eye(3)))
    worst_perm = 0.0
    for _ in range(10):
        ests = []
        for _ in range(5):
            pose = exp_map(np.r_[rng.normal(scale=0.05, size=3) + [0, 0, 0.6], rng.normal(scale=0.2, size=3)])
            ests.append(PoseWithCovariance(pose, rng.uniform(0.05, 1.0) * np.eye(6)))
        base = fuse_estimates(ests).pose
        for _ in range(5):
            perm = fuse_estimates([ests[i] for i in rng.permutation(5)]).pose
            worst_perm = max(worst_perm, float(np.abs(perm.matrix() - base.matrix()).max()))
    detail(record_property, f"closed-form error {worst_closed:.1e}, permutation spread {worst_perm:.1e}")
    assert worst_closed < 1e-9 and worst_perm < 1e-9


# --- 10 --------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.criterion(10, "sequential: Average <= Last Estimate + 0.02")
def test_criterion_10_sequential_trend(record_property):
    cfg = parse_config(
        "experiment = sequential\nmeshes = sphere, box\n"
        "variants = projective_cascading/last_estimate, projective_cascading/average\n"
        "samples_per_object = 20\nbins = 1\nseed = 10\ntiming = fixed:0.5\n"
    )
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    final = {}
    for r in report.rows:
        final.setdefault(r.variant.split("/")[1], []).append(r.post_vsd)
    last, avg = float(np.mean(final["last_estimate"])), float(np.mean(final["average"]))
    detail(record_property, f"final VSD average {avg:.3f} vs last estimate {last:.3f} over {len(final['average'])} trajectories, {elapsed:.0f} s")
    assert len(final["average"]) == len(final["last_estimate"]) == 40
    assert avg <= last + 0.02
    assert elapsed < 300


# --- 11 --------------------------------------------------------------------


@pytest.mark.criterion(11, "byte-identical CSV under fixed timing")
def test_criterion_11_determinism(tmp_path, record_property):
    cfg = tmp_path / "det.cfg"
    cfg.write_text(
        "experiment = init_noise\nmeshes = sphere, box\nvariants = nn_p2p, hybrid\n"
        "samples_per_object = 1\nbins = 3\nseed = 77\ntiming = fixed:0.25\n"
    )
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    codes = [bench_main(["init_noise", "--config", str(cfg), "--out", str(o), "--quiet"]) for o in outs]
    same = filecmp.cmp(outs[0], outs[1], shallow=False)
    n = len(outs[0].read_text().splitlines()) - 2
    detail(record_property, f"exit codes {codes}, {n} rows, identical: {same}")
    assert codes == [0, 0] and n > 0 and same
