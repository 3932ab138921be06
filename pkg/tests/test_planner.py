import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thrustlab import planner
from thrustlab.config import PlannerSection, RunConfig
from thrustlab.errors import ParamInvalid, PolicyTaskMismatch
from thrustlab.planner import PerfectTracker, ReferencePath, follow, gen_path, lookahead_point, velocity_command


def brute_force_lookahead(points, pos, radius=0.25):
    best = None
    for i, p in enumerate(points):
        if math.dist(p, pos) <= radius:
            best = i
    if best is None:
        dists = [math.dist(p, pos) for p in points]
        best = dists.index(min(dists))
    return best


def test_lookahead_examples():
    path = ReferencePath([[0.0, 0], [0.1, 0], [0.2, 0], [0.3, 0]])
    point, idx = lookahead_point(path, [0.0, 0.0])
    assert idx == 2 and point.tolist() == [0.2, 0.0]
    assert lookahead_point(path, [10.0, 10.0])[1] == 3
    sparse = ReferencePath([[0.0, 0], [1.0, 0], [2.0, 0]])
    assert lookahead_point(sparse, [1.0, 0.0])[1] == 1


def test_lookahead_ties_go_to_lower_index():
    path = ReferencePath([[1.0, 0], [-1.0, 0], [0, 1.0]])
    assert lookahead_point(path, [0.0, 0.0])[1] == 0


def test_lookahead_matches_brute_force_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = rng.integers(2, 12)
        pts = np.cumsum(rng.uniform(-0.2, 0.2, (n, 2)), axis=0)
        pos = pts[rng.integers(n)] + rng.uniform(-0.4, 0.4, 2)
        want = brute_force_lookahead(pts.tolist(), pos.tolist())
        assert lookahead_point(ReferencePath(pts), pos)[1] == want


def test_closed_path_away_from_seam_uses_plain_rule():
    path = gen_path("circle")
    pos = path.points[40] * 0.99
    assert lookahead_point(path, pos)[1] == brute_force_lookahead(path.points.tolist(), pos.tolist())


def test_closed_path_seam_keeps_moving_forward():
    path = gen_path("circle")
    n = len(path)
    # sitting just before the seam, the pick should be past it, not back at n - 1
    pos = path.points[n - 2]
    _, idx = lookahead_point(path, pos)
    assert 0 <= idx < 10
    assert math.dist(path.points[idx], pos) <= 0.25


def test_velocity_command_examples():
    np.testing.assert_array_equal(velocity_command([1.0, 0], [0.0, 0]), [0.25, 0.0])
    np.testing.assert_array_equal(velocity_command([0.3, 0.4], [0.3, 0.4]), [0.0, 0.0])
    with pytest.raises(ParamInvalid):
        velocity_command([1.0, 0], [0.0, 0], cruise=0.0)


@settings(max_examples=300)
@given(st.tuples(*[st.floats(-5, 5, allow_nan=False)] * 4))
def test_commanded_speed_is_exact(v):
    cmd = velocity_command(v[:2], v[2:])
    speed = math.hypot(*cmd)
    assert speed == 0.0 or abs(speed - 0.25) < 1e-15


def max_spacing(path):
    return path.spacing().max()


@pytest.mark.parametrize("shape", planner.SHAPES)
def test_spacing_bound(shape):
    path = gen_path(shape)
    # pairwise scan of consecutive points, independent of ReferencePath.spacing
    pts = path.points.tolist() + (path.points[:1].tolist() if path.closed else [])
    worst = max(math.dist(a, b) for a, b in zip(pts, pts[1:]))
    assert worst <= 0.05 + 1e-9
    assert max_spacing(path) == pytest.approx(worst)


def test_circle_geometry():
    path = gen_path("circle")
    assert path.closed
    r = np.linalg.norm(path.points, axis=1)
    assert np.abs(r - 1.5).max() < 1e-9


def test_spiral_geometry():
    path = gen_path("spiral")
    assert not path.closed
    r = np.linalg.norm(path.points, axis=1)
    assert r[0] == pytest.approx(0.2) and r[-1] == pytest.approx(2.0)
    phi = np.unwrap(np.arctan2(path.points[:, 1], path.points[:, 0]))
    # points sit on r = 0.2 + 0.08 phi up to polyline resampling error
    assert np.abs(r - (0.2 + 0.08 * phi)).max() < 1e-4


def test_square_geometry():
    path = gen_path("square")
    assert path.closed
    pts = np.vstack([path.points, path.points[:1]])
    steps = np.diff(pts, axis=0)
    # every segment is axis-aligned
    assert np.all(np.min(np.abs(steps), axis=1) < 1e-12)
    directions = np.sign(np.round(steps, 12))
    turns = np.any(directions[1:] != directions[:-1], axis=1).sum() + int(np.any(directions[0] != directions[-1]))
    assert turns == 4
    assert np.abs(path.points).max() == pytest.approx(1.0)


def test_gen_path_errors():
    with pytest.raises(ParamInvalid):
        gen_path("hexagon")
    with pytest.raises(ParamInvalid):
        gen_path("circle", PlannerSection(spacing=0.3))
    with pytest.raises(ParamInvalid):
        ReferencePath([[0.0, 0.0]])
    with pytest.raises(ParamInvalid):
        ReferencePath([[0.0, 0.0], [np.nan, 1.0]])


def test_zero_length_run_gives_empty_log():
    path = gen_path("circle")
    env = planner.tracking_env(path=path, steps=0)
    assert follow(PerfectTracker(env), env, path, 0) == []
    assert planner.speed_tracking_error([]) == 0.0


def test_perfect_tracker_on_straight_line():
    path = ReferencePath(np.column_stack([np.arange(0, 5.0001, 0.05), np.zeros(101)]))
    env = planner.tracking_env(path=path, steps=100)
    rows = follow(PerfectTracker(env), env, path, 100)
    dt = env.spec.control_dt
    xs = np.array([r["x"] for r in rows])
    np.testing.assert_allclose(xs, 0.25 * dt * np.arange(100), atol=1e-12)
    assert all(r["y"] == 0.0 for r in rows)
    assert planner.speed_tracking_error(rows) < 1e-12


def circle_run(steps=None):
    path = gen_path("circle")
    cfg = RunConfig.for_task("trackxyvelocity")
    steps = steps or planner.default_steps(path, cfg.planner, 1.0 / cfg.sim.control_hz)
    env = planner.tracking_env(cfg, path=path, steps=steps)
    return path, follow(PerfectTracker(env), env, path, steps)


def test_perfect_tracker_circle_lap_closes():
    _, rows = circle_run()
    xy = np.array([[r["x"], r["y"]] for r in rows])
    swept = np.unwrap(np.arctan2(xy[:, 1], xy[:, 0]))
    swept -= swept[0]
    lap = int(np.argmax(swept >= 2 * math.pi))
    assert lap > 0
    assert math.dist(xy[lap], xy[0]) < 0.1


def test_circle_commands_are_sampled_sinusoids():
    path, rows = circle_run()
    xy = np.array([[r["x"], r["y"]] for r in rows])
    swept = np.unwrap(np.arctan2(xy[:, 1], xy[:, 0])) - math.atan2(xy[0, 1], xy[0, 0])
    lap = rows[: int(np.argmax(swept >= 2 * math.pi))]
    for key in ("cmd_vx", "cmd_vy"):
        s = np.sign([r[key] for r in lap])
        s = s[s != 0]
        # counted cyclically: one lap of a sinusoid changes sign exactly twice
        assert (s != np.roll(s, 1)).sum() == 2


def test_closed_path_progress_is_monotone():
    path, rows = circle_run()
    idx = np.array([r["target_index"] for r in rows])
    n = len(path)
    steps = (np.diff(idx) + n) % n
    assert steps.max() < n // 2


def test_follow_rejects_wrong_task():
    from thrustlab import vecenv

    env = vecenv.make(RunConfig.for_task("gotoxy"), 1, 0)
    with pytest.raises(PolicyTaskMismatch):
        follow(lambda obs: None, env, gen_path("circle"), 1)
    with pytest.raises(PolicyTaskMismatch):
        planner.tracking_env(RunConfig.for_task("gotoxy"))


def test_write_log(tmp_path):
    _, rows = circle_run(steps=5)
    planner.write_log(rows, tmp_path / "log.csv", config_hash="abc")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "# config_hash=abc"
    assert lines[1] == ",".join(planner.LOG_FIELDS)
    assert len(lines) == 7


def test_square_commands_have_four_headings():
    path = gen_path("square")
    cfg = RunConfig.for_task("trackxyvelocity")
    steps = planner.default_steps(path, cfg.planner, cfg.control_dt)
    env = planner.tracking_env(cfg, path=path, steps=steps)
    rows = follow(PerfectTracker(env), env, path, steps)
    headings = np.degrees([math.atan2(r["cmd_vy"], r["cmd_vx"]) for r in rows]) % 360
    # the look-ahead cuts each corner and settles back onto the next side;
    # group headings by the nearest axis direction and keep the ones close to it
    axis = np.round(headings / 90) % 4
    on_side = np.abs((headings + 45) % 90 - 45) < 2.0
    counts = np.bincount(axis[on_side].astype(int), minlength=4)
    assert (counts >= 10).all()
    assert on_side.mean() > 0.5
    # off-axis headings are corner transitions: none of them persists
    _, off_counts = np.unique(np.round(headings[~on_side]), return_counts=True)
    assert off_counts.max() < 10
