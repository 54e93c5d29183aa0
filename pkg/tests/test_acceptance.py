"""Acceptance gate: end-to-end guarantees of the whole pipeline, one test
(and one printed pass/fail line) per criterion."""

import json
import math
import time

import numpy as np
from click.testing import CliRunner
from fastapi.testclient import TestClient

from covillm import cases
from covillm.backends import OracleMockBackend
from covillm.board import BoardConfig
from covillm.cli import main as cli_main
from covillm.evaluation import run_eval
from covillm.executor import (WorkcellComponent, WorkcellState, execute_step,
                              replay_events)
from covillm.filters import FilterParams, depth_to_disparity, denoise, \
    disparity_to_depth, hole_fill
from covillm.frames import CameraIntrinsics, DepthFrame, DisparityFrame, \
    frame_to_bytes
from covillm.geometry import (GeometryContext, compose,
                              pixel_to_base, project_to_pixel,
                              valid_camera_height_range)
from covillm.localize import (BinaryMask, Candidate, LocalizationParams,
                              contour_centroid, find_contours, histogram_mode,
                              localize)
from covillm.planner import (AssemblySubtask, generate_finetune_dataset,
                             parse_plan_response)
from covillm.service import ServiceConfig, create_app
from covillm.synth import (Footprint, SceneComponent, SceneSpec,
                           scene_ground_truth, synthesize_frame)

from conftest import random_intrinsics, random_transform
from oracles import flood_fill_regions, histogram_mode_oracle, \
    matmul_chain_oracle


def report(capsys, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" ({detail})"
    with capsys.disabled():
        print(line)
    assert ok, f"{name}: {detail}"


def test_catalog_products_all_plans_correct(capsys, tmp_path):
    """All 9 catalog products plan with the exact instruction order, < 10 s."""
    runner = CliRunner()
    t0 = time.perf_counter()
    failures = []
    for level in (1, 2, 3):
        for product in (1, 2, 3):
            seed = level * 100 + product
            labels = cases.PRODUCTS[level][product - 1]
            scene = cases.build_scene(labels, seed)
            scene_path = tmp_path / f"l{level}p{product}.scene.json"
            scene_path.write_text(scene.to_json())
            cls_path = tmp_path / f"l{level}p{product}.cls.txt"
            cls_path.write_text(cases.classification_for_scene(scene))
            result = runner.invoke(cli_main, [
                "--seed", str(seed), "--json", "run",
                "--scene", str(scene_path),
                "--classification", str(cls_path),
                "--instruction", cases.instruction_for(labels)])
            if result.exit_code != 0:
                failures.append(f"level {level} product {product}: "
                                f"exit {result.exit_code}")
                continue
            payload = json.loads(result.output)
            got = [s["category"] for s in payload["plan"]["subtasks"]]
            want = [l.text() for l in labels]
            if got != want or not payload["completed"]:
                failures.append(f"level {level} product {product}: {got}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 10.0
    report(capsys, "catalog products: 9/9 correct plan order",
           ok, failures[0] if failures else f"9/9 in {elapsed:.1f}s")


def test_eval_oracle_backend_perfect_and_deterministic(capsys):
    """The oracle-mock backend scores 3/3 at every level, reproducibly."""
    def scores():
        report_obj = run_eval(OracleMockBackend(board=BoardConfig.default()),
                              trials=3, seed=0)
        return {lvl: (r.correct, r.trials)
                for lvl, r in report_obj.levels.items()}
    a, b = scores(), scores()
    ok = (a == b and set(a) == {1, 2, 3}
          and all(v == (3, 3) for v in a.values()))
    report(capsys, "evaluation: oracle backend 3/3 per level, stable",
           ok, f"run A {a}, run B {b}")


def test_localization_accuracy_randomized_scenes(capsys):
    """100 random scenes, noiseless and with noise/dropout, within budget."""
    intr = CameraIntrinsics.default()
    fp, lp = FilterParams(), LocalizationParams()
    all_labels = sorted(cases.COMPONENT_GEOMETRY, key=lambda l: l.text())
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()

    def run_condition(noise, dropout, scene_seeds):
        total = detected = 0
        max_px = max_z = 0.0
        for seed in scene_seeds:
            r = np.random.default_rng(seed)
            n = int(r.integers(1, 5))
            picks = r.choice(len(all_labels), size=n, replace=False)
            labels = tuple(all_labels[i] for i in picks)
            scene = cases.build_scene(labels, seed, noise_sigma_mm=noise,
                                      dropout_rate=dropout)
            frame = synthesize_frame(scene, intr, seed)
            cands, _ = localize([frame], fp, lp)
            for gt in scene_ground_truth(scene, intr):
                total += 1
                if not cands:
                    continue
                best = min(cands, key=lambda c: math.hypot(c.c_x - gt.cx_px,
                                                           c.c_y - gt.cy_px))
                err_px = math.hypot(best.c_x - gt.cx_px, best.c_y - gt.cy_px)
                if err_px > 5.0:
                    continue
                detected += 1
                max_px = max(max_px, err_px)
                max_z = max(max_z, abs(best.z - gt.z_mm))
        return total, detected, max_px, max_z

    seeds = [int(s) for s in rng.integers(0, 10**6, size=100)]
    t_c, d_c, px_c, z_c = run_condition(0.0, 0.0, seeds)
    t_n, d_n, px_n, z_n = run_condition(2.0, 0.02, seeds)
    elapsed = time.perf_counter() - t0
    clean_ok = d_c == t_c and px_c <= 1.0 and z_c <= 1.0
    noisy_ok = d_n / t_n >= 0.95 and px_n <= 2.0 and z_n <= 3.0
    ok = clean_ok and noisy_ok and elapsed < 60.0
    report(capsys, "localization: 100-scene accuracy, clean and noisy", ok,
           f"clean {d_c}/{t_c} ({px_c:.2f}px/{z_c:.0f}mm), "
           f"noisy {d_n}/{t_n} ({px_n:.2f}px/{z_n:.0f}mm), {elapsed:.1f}s")


def test_localization_primitives_match_oracles(capsys):
    """Mode, contours and centroids agree with independent re-implementations."""
    rng = np.random.default_rng(7)
    ok, detail = True, ""

    for i in range(1000):
        size = int(rng.integers(1, 300))
        values = rng.uniform(150, 800, size=size)
        bw = float(rng.choice([0.5, 1.0, 2.0, 5.0]))
        if histogram_mode(values, bw) != histogram_mode_oracle(values, bw):
            ok, detail = False, f"histogram mode mismatch at multiset {i}"
            break

    if ok:
        for i in range(200):
            bits = rng.random((30, 40)) < float(rng.uniform(0.2, 0.5))
            mask = BinaryMask(40, 30, bits)
            contours = find_contours(mask)
            regions = flood_fill_regions(bits)
            if (len(contours) != len(regions)
                    or sorted(c.area for c in contours)
                    != sorted(len(r) for r in regions)):
                ok, detail = False, f"contour mismatch at mask {i}"
                break
            if i < 50:
                by_pixel = {}
                for r in regions:
                    for p in r:
                        by_pixel[p] = r
                for c in contours:
                    region = by_pixel[(c._rows[0], c._cols[0])]
                    cx, cy = contour_centroid(c, mask)
                    mx = sum(p[1] for p in region) / len(region)
                    my = sum(p[0] for p in region) / len(region)
                    if abs(cx - mx) > 1e-12 or abs(cy - my) > 1e-12:
                        ok, detail = False, f"centroid mismatch at mask {i}"
                        break
                if not ok:
                    break

    report(capsys, "localization primitives: oracle equivalence", ok, detail)


def test_geometry_round_trip_and_compose_oracle(capsys):
    """Projection inverts backprojection; composition matches dense matmul."""
    rng = np.random.default_rng(99)
    worst_rt = 0.0
    for _ in range(1000):
        intr = random_intrinsics(rng)
        t_ec, t_be = random_transform(rng), random_transform(rng)
        c_x = float(rng.uniform(0, intr.width - 1))
        c_y = float(rng.uniform(0, intr.height - 1))
        z = float(rng.uniform(150.0, 2000.0))
        cand = Candidate(id=1, c_x=c_x, c_y=c_y, z=z, area=100,
                         bbox=(0, 0, 1, 1))
        p = pixel_to_base(cand, intr, t_ec, t_be)
        rx, ry, rz = project_to_pixel(p, intr, t_ec, t_be)
        worst_rt = max(worst_rt, abs(rx - c_x), abs(ry - c_y), abs(rz - z))

    worst_mm = worst_rot = 0.0
    for _ in range(1000):
        a, b = random_transform(rng), random_transform(rng)
        c = compose(a, b)
        worst_mm = max(worst_mm, float(np.max(np.abs(
            c.matrix() - matmul_chain_oracle(a.matrix(), b.matrix())))))
        worst_rot = max(worst_rot,
                        float(np.max(np.abs(c.r.T @ c.r - np.eye(3)))),
                        abs(float(np.linalg.det(c.r)) - 1.0))

    ok = worst_rt <= 1e-6 and worst_mm <= 1e-12 and worst_rot <= 1e-9
    report(capsys, "geometry: 1000-tuple round trip and compose oracle", ok,
           f"round trip {worst_rt:.2e}, compose {worst_mm:.2e}, "
           f"rotation {worst_rot:.2e}")


def test_denoise_identities(capsys):
    """Constant frames are fixed points; the disparity transforms invert
    exactly; hole filling leaves only row-prefix holes."""
    fp = FilterParams()
    ok, detail = True, ""

    for value in (1, 123, 400, 65535):
        f = DepthFrame.constant(32, 24, value)
        if not np.array_equal(denoise([f], fp).data, f.data):
            ok, detail = False, f"constant frame {value} not a fixed point"

    if ok:
        depths = np.arange(0, 65536, dtype=np.uint16).reshape(256, 256)
        f = DepthFrame(256, 256, depths)
        for k in (30000.0, 200000.0, 1.5e6):
            g = disparity_to_depth(depth_to_disparity(f, k), k)
            if not np.array_equal(f.data, g.data):
                ok, detail = False, f"round trip not exact at k={k}"
                break

    if ok:
        rng = np.random.default_rng(5)
        for i in range(200):
            data = rng.uniform(10, 90, size=(8, 12))
            data[rng.random(data.shape) < 0.4] = 0.0
            out = hole_fill(DisparityFrame(12, 8, data)).data
            for y in range(8):
                holes = np.nonzero(out[y] == 0)[0]
                if holes.size and not np.array_equal(
                        holes, np.arange(holes.size)):
                    ok, detail = False, f"non-prefix hole, frame {i} row {y}"
    report(capsys, "denoise: identity and round-trip properties", ok, detail)


def test_camera_height_operating_point(capsys):
    """Every catalog component is localizable at the 400 mm working distance
    and the validity interval moves monotonically with the filters."""
    intr = CameraIntrinsics.default()
    lp = LocalizationParams()
    ok, detail = True, ""
    for spec in cases.footprint_specs():
        rng = valid_camera_height_range(spec, lp, intr)
        if rng is None or not (rng[0] <= 400.0 <= rng[1]):
            ok, detail = False, f"{spec.label}: {rng}"
            break

    if ok:
        spec = cases.footprint_specs()[0]
        prev_hi = math.inf
        for a_min in (50, 200, 1000, 5000):
            r = valid_camera_height_range(
                spec, LocalizationParams(a_min=a_min), intr)
            if r is not None:
                if r[1] > prev_hi + 1e-9:
                    ok, detail = False, "z_hi grew as a_min grew"
                prev_hi = r[1]
        prev_lo = math.inf
        for a_max in (5000, 20000, 80000):
            r = valid_camera_height_range(
                spec, LocalizationParams(a_max=a_max), intr)
            if r is not None:
                if r[0] > prev_lo + 1e-9:
                    ok, detail = False, "z_lo grew as a_max grew"
                prev_lo = r[0]
    report(capsys, "camera height: 400 mm valid for all components, "
           "monotone sweeps", ok, detail)


def test_executor_conservation_atomicity_replay(capsys):
    """500 randomized runs: components are conserved, failures change
    nothing, and the event log replays to the exact final state."""
    rng = np.random.default_rng(31)
    board_template = BoardConfig.default()
    all_labels = sorted(cases.COMPONENT_GEOMETRY, key=lambda l: l.text())
    ok, detail = True, ""

    for case_no in range(500):
        k = int(rng.integers(1, 5))
        picks = rng.choice(len(all_labels), size=k, replace=False)
        labels = [all_labels[i] for i in picks]
        comps, subtasks, taken = [], [], set()
        board = board_template.copy()
        from covillm.geometry import BasePoint
        for i, label in enumerate(labels):
            pos = BasePoint(float(rng.uniform(200, 600)),
                            float(rng.uniform(-200, 200)), 20.0)
            comps.append(WorkcellComponent(id=i + 1, position=pos, label=label))
            slot = board.first_free_for(label, taken=taken)
            taken.add(slot.id)
            subtasks.append(AssemblySubtask(index=i + 1, category=label,
                                            pick=pos, slot_id=slot.id,
                                            place=slot.place))
        state = WorkcellState.fresh(comps, board)
        # random perturbations that should trip the feasibility checks
        if rng.random() < 0.3:
            state.board.occupy(subtasks[int(rng.integers(k))].slot_id)
        if rng.random() < 0.3:
            c = state.components[int(rng.integers(k))]
            c.position = BasePoint(c.position.x + 100.0, c.position.y,
                                   c.position.z)
        initial = state.copy()
        log = []
        n_total = len(state.components)
        for st in subtasks:
            before = json.dumps(state.to_dict(), sort_keys=True)
            state, events = execute_step(state, st)
            log.extend(events)
            table, held, placed = state.counts()
            if table + held + placed != n_total or held not in (0, 1):
                ok, detail = False, f"conservation broken in case {case_no}"
                break
            if events[-1].kind == "error":
                after = json.dumps(state.to_dict(), sort_keys=True)
                if after != before:
                    ok, detail = False, f"failed step mutated state, case {case_no}"
                    break
        if not ok:
            break
        replayed = replay_events(initial, log)
        if replayed.to_dict() != state.to_dict():
            ok, detail = False, f"replay diverged in case {case_no}"
            break
    report(capsys, "executor: 500 randomized conservation/atomicity/replay",
           ok, detail)


def test_finetune_dataset_valid_and_stable(capsys):
    """100 emitted records all re-parse and validate; byte-stable per seed."""
    t0 = time.perf_counter()
    a = generate_finetune_dataset(count=100, seed=0)
    board = BoardConfig.default()
    ok, detail = True, ""
    for i, rec in enumerate(a):
        try:
            plan = parse_plan_response(rec.assistant, board)
        except Exception as exc:
            ok, detail = False, f"record {i} invalid: {exc}"
            break
        if plan.n < 2 or "INSTRUCTION: " not in rec.user:
            ok, detail = False, f"record {i} malformed"
            break
    if ok:
        b = generate_finetune_dataset(count=100, seed=0)
        blob_a = "".join(r.to_json_line() + "\n" for r in a).encode()
        blob_b = "".join(r.to_json_line() + "\n" for r in b).encode()
        if blob_a != blob_b:
            ok, detail = False, "dataset not byte-stable under fixed seed"
    report(capsys, "fine-tune dataset: 100 valid records, byte-stable", ok,
           detail or f"{time.perf_counter() - t0:.1f}s")


def test_service_phase_machine_random_sequences(capsys, tmp_path):
    """>= 1000 random API call sequences with process kill-and-reload never
    produce an illegal phase transition."""
    intr = CameraIntrinsics.default(width=160, height=120, focal=200.0)
    geo = GeometryContext.default(intr)
    scene = SceneSpec(surface_depth_mm=400, components=(
        SceneComponent(category="small gear",
                       footprint=Footprint("circle", d_mm=20),
                       height_mm=20, x_mm=-40, y_mm=0),
        SceneComponent(category="medium gear",
                       footprint=Footprint("circle", d_mm=30),
                       height_mm=22, x_mm=40, y_mm=0),
    ))
    frame_blob = frame_to_bytes(synthesize_frame(scene, intr, seed=0))
    cls_text = "small gear: 1st from left\nmedium gear: 2nd from left\n"
    instruction = "small gear, medium gear"
    n_subtasks = 2

    config = ServiceConfig(data_dir=tmp_path / "data", geo=geo,
                           board=BoardConfig.default())
    client = TestClient(create_app(config))
    rng = np.random.default_rng(77)
    ok, detail = True, ""
    ops = ("localize", "classify", "plan", "step", "get")

    for seq in range(1000):
        r = client.post("/v1/sessions", content=frame_blob,
                        headers={"content-type": "application/octet-stream"})
        if r.status_code != 201:
            ok, detail = False, f"seq {seq}: create failed {r.status_code}"
            break
        sid = r.json()["id"]
        phase, steps = "created", 0
        for _ in range(5):
            if rng.random() < 0.05:  # simulate a process restart
                client = TestClient(create_app(config))
            op = ops[int(rng.integers(len(ops)))]
            if op == "localize":
                resp = client.post(f"/v1/sessions/{sid}/localize")
                legal = phase in ("created", "localized")
                if legal:
                    phase = "localized"
            elif op == "classify":
                resp = client.post(f"/v1/sessions/{sid}/classify",
                                   content=cls_text)
                legal = phase in ("localized", "classified")
                if legal:
                    phase = "classified"
            elif op == "plan":
                resp = client.post(f"/v1/sessions/{sid}/plan",
                                   json={"instruction": instruction})
                legal = phase in ("classified", "planned")
                if legal:
                    phase, steps = "planned", 0
            elif op == "step":
                resp = client.post(f"/v1/sessions/{sid}/step")
                legal = phase in ("planned", "executing")
                if legal:
                    steps += 1
                    phase = "done" if steps >= n_subtasks else "executing"
            else:
                resp = client.get(f"/v1/sessions/{sid}")
                legal = True
            want = 200 if legal else 409
            if resp.status_code != want:
                ok, detail = (False, f"seq {seq}: {op} in {phase!r} gave "
                              f"{resp.status_code}, expected {want}")
                break
            observed = client.get(f"/v1/sessions/{sid}").json()["phase"]
            if observed != phase:
                ok, detail = (False, f"seq {seq}: phase {observed!r}, "
                              f"model says {phase!r} after {op}")
                break
        if not ok:
            break
    report(capsys, "service: 1000 random call sequences with reload", ok,
           detail)
