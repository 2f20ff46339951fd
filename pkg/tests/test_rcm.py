from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from regioncam.core import ConfigError, Frame, SimConfig, build_grid
from regioncam.rcm import (
    RcmState, RegionScores, RelevanceBits, RenderAction, classify, corner_counts, edge_counts,
    harris_response, mad, median3, rcm_step, sobel, spatial_scores, temporal_mismatch, variance,
)

RAW = SimConfig(noise_filter="none")


# --- median ------------------------------------------------------------------

def test_median_constant():
    f = Frame(np.full((6, 7), 42, np.uint8))
    assert median3(f) == f


def test_median_removes_isolated_spike():
    px = np.zeros((5, 5), np.uint8)
    px[2, 2] = 255
    assert not median3(Frame(px)).pixels.any()


def test_median_1_to_9():
    px = np.arange(1, 10, dtype=np.uint8).reshape(3, 3)
    out = median3(Frame(px)).pixels
    assert out[1, 1] == 5
    assert out.tolist() == oracles.median3(px.tolist())


@settings(max_examples=30)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_median_matches_oracle(px):
    assert median3(px).tolist() == oracles.median3(px.tolist())


# --- MAD / variance ----------------------------------------------------------

@pytest.mark.parametrize("xs, want_mad, want_var", [
    ([7, 7, 7, 7], 0.0, 0.0),
    ([2, 4], 1.0, 1.0),
    ([0, 0, 0, 8], 3.0, 12.0),
])
def test_mad_variance_examples(xs, want_mad, want_var):
    assert oracles.mad(xs) == want_mad and oracles.variance(xs) == want_var
    assert mad(np.array(xs)) == want_mad
    assert variance(np.array(xs)) == want_var


def test_scores_accept_region_views():
    g = build_grid(4, 4, 2)
    px = np.array([[0, 0, 1, 1], [0, 8, 1, 1], [5, 5, 5, 5], [5, 5, 5, 5]], np.uint8)
    assert mad(g.view(px, 0)) == 3.0
    assert variance(g.view(px, 0)) == 12.0
    assert mad(g.view(px, 1)) == 0.0


@settings(max_examples=200)
@given(st.lists(st.integers(0, 255), min_size=1, max_size=64))
def test_mad_squared_at_most_variance(xs):
    m, v = mad(np.array(xs)), variance(np.array(xs))
    assert m * m <= v * (1 + 1e-12)
    assert abs(m - oracles.mad(xs)) < 1e-9
    assert abs(v - oracles.variance(xs)) < 1e-9
    constant = len(set(xs)) == 1
    assert (m == 0) == constant and (v == 0) == constant


@given(st.lists(st.integers(0, 200), min_size=1, max_size=64), st.integers(0, 55))
def test_shift_invariance(xs, c):
    a = np.array(xs)
    assert mad(a + c) == mad(a)
    assert variance(a + c) == variance(a)


# --- edges and corners -------------------------------------------------------

def step_frame(size=24, col=12):
    px = np.zeros((size, size), np.uint8)
    px[:, col:] = 255
    return px


def test_sobel_on_step():
    gx, gy = sobel(step_frame())
    assert not gy.any()
    mag = np.abs(gx) + np.abs(gy)
    assert set(np.unique(mag)) == {0, 1020}
    assert sorted(set(np.nonzero(mag)[1])) == [11, 12]


def test_edge_counts_constant_and_step():
    g = build_grid(24, 24, 8)
    assert not edge_counts(np.full((24, 24), 9, np.uint8), g, 100).any()
    counts = edge_counts(step_frame(), g, 100)
    # columns 11 and 12 lie in region column 1: 8 rows x 2 columns per region
    assert counts.tolist() == [0, 16, 0] * 3
    mask = oracles.edge_points(step_frame().tolist(), 100)
    assert counts.tolist() == oracles.region_counts(mask, 8)


def test_edge_count_threshold_inclusive():
    assert classify(RegionScores(5, 0), SimConfig(spatial_threshold=5)).srs == 1
    assert classify(RegionScores(4, 0), SimConfig(spatial_threshold=5)).srs == 0


def checkerboard(size=24, at=12):
    r, c = np.indices((size, size))
    return np.where((r < at) != (c < at), 255, 0).astype(np.uint8)


def test_corner_counts_checkerboard():
    g = build_grid(24, 24, 8)
    counts = corner_counts(checkerboard(), g, 0.04, 1e6)
    # pinned from the pure-Python Harris oracle
    assert counts.tolist() == [0, 0, 0, 0, 16, 0, 0, 0, 0]


def test_corner_counts_step_and_constant():
    g = build_grid(24, 24, 8)
    assert not corner_counts(step_frame(), g, 0.04, 1e6).any()
    assert harris_response(step_frame(), 0.04).max() <= 0
    assert not corner_counts(np.zeros((24, 24), np.uint8), g, 0.04, 1e6).any()


@settings(max_examples=15, deadline=None)
@given(arrays(np.uint8, (16, 16)), st.sampled_from([0.04, 0.06]))
def test_harris_matches_oracle(px, k):
    got = harris_response(px, k)
    want = np.array(oracles.harris(px.tolist(), k))
    assert np.allclose(got, want, rtol=1e-12, atol=1e-6)


# --- temporal ----------------------------------------------------------------

def test_temporal_mismatch_examples():
    a = np.arange(16).reshape(4, 4)
    assert temporal_mismatch(a, a, 1) == 0
    b = a.copy()
    b[1, 2] += 3
    assert temporal_mismatch(b, a, 3) == 1
    assert temporal_mismatch(b, a, 4) == 0
    assert temporal_mismatch(a + 5, a, 5) == 16
    assert temporal_mismatch(a, a, 0) == 16


# --- classification ----------------------------------------------------------

@pytest.mark.parametrize("trs, srs, active, action", [
    (1, 1, True, RenderAction.CURRENT),
    (0, 1, False, RenderAction.PREVIOUS),
    (0, 0, False, RenderAction.SUPPRESSED),
    (1, 0, False, RenderAction.SUPPRESSED),
])
def test_relevance_table(trs, srs, active, action):
    bits = RelevanceBits(srs=srs, trs=trs)
    assert bits.active == active and bits.action == action


def test_classify_thresholds():
    cfg = SimConfig(spatial_threshold=3, temporal_threshold=2)
    assert classify(RegionScores(3.0, 2), cfg) == RelevanceBits(1, 1)
    assert classify(RegionScores(2.99, 2), cfg) == RelevanceBits(0, 1)
    assert classify(RegionScores(3.0, 1), cfg) == RelevanceBits(1, 0)


@settings(max_examples=30)
@given(arrays(np.uint8, (16, 16)), st.sampled_from(["mad", "variance", "edge", "corner"]),
       st.floats(0, 50), st.floats(0, 50))
def test_threshold_monotonicity(px, feature, a, b):
    lo, hi = sorted((a, b))
    g = build_grid(16, 16, 4)
    s = spatial_scores(px, g, SimConfig(spatial_feature=feature, noise_filter="none", corner_response_threshold=1e9))
    assert not ((s >= hi) & ~(s >= lo)).any()


# --- rcm_step ----------------------------------------------------------------

def _run(frames, cfg, **kw):
    g = build_grid(frames[0].shape[1], frames[0].shape[0], cfg.region_size)
    state = RcmState()
    out = []
    for t, px in enumerate(frames):
        rmap, events, state = rcm_step(Frame(px, t), state, g, cfg, **kw)
        out.append((rmap, events))
    return g, out


def test_bootstrap_all_active(rng):
    px = rng.integers(0, 256, (16, 24), dtype=np.uint8)
    g, [(rmap, events)] = _run([px], SimConfig(spatial_threshold=1e9, temporal_threshold=10**6))
    assert len(events) == g.M == 6
    assert all(ev.active and ev.srs == ev.trs == 1 for ev in events)
    assert [ev.rid for ev in events] == list(range(6))
    assert rmap.active.all()
    for ev in events:
        assert ev.payload == g.view(px, ev.rid).pixels.tobytes()


def test_repeated_frame_has_no_active_regions(rng):
    px = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    _, out = _run([px, px], SimConfig(temporal_pixel_delta=1, temporal_threshold=1, spatial_threshold=0))
    assert not any(ev.active for ev in out[1][1])
    assert not out[1][0].mismatch_count.any()


def test_zero_thresholds_make_everything_active(rng):
    frames = [rng.integers(0, 256, (16, 16), dtype=np.uint8) for _ in range(3)]
    frames.append(frames[-1])
    _, out = _run(frames, SimConfig(spatial_threshold=0, temporal_threshold=0))
    for rmap, events in out:
        assert all(ev.active for ev in events)


def test_payload_is_raw_while_scores_use_denoised():
    px = np.zeros((8, 8), np.uint8)
    px[3, 3] = 255      # removed by the median filter
    cfg = SimConfig(spatial_threshold=0.5, temporal_threshold=0)
    g, out = _run([np.zeros((8, 8), np.uint8), px], cfg)
    rmap, events = out[1]
    assert rmap.spatial_score[0] == 0.0
    assert events[0].srs == 0 and events[0].payload is None
    g, out = _run([np.zeros((8, 8), np.uint8), px], cfg.replace(spatial_threshold=0))
    assert np.frombuffer(out[1][1][0].payload, np.uint8).reshape(8, 8)[3, 3] == 255


def test_idempotent_stillness(rng):
    px = rng.integers(0, 256, (24, 24), dtype=np.uint8)
    for policy in ("every_frame", "on_event"):
        cfg = SimConfig(temporal_pixel_delta=1, spatial_threshold=0, reference_update=policy)
        _, out = _run([px] * 5, cfg)
        assert [sum(ev.active for ev in events) for _, events in out] == [9, 0, 0, 0, 0]


def test_on_event_reference_accumulates_slow_drift():
    # +1 per frame never reaches delta=3 frame-to-frame, but does against a frozen reference
    frames = [np.full((8, 8), 100 + t, np.uint8) for t in range(5)]
    base = SimConfig(spatial_threshold=0, temporal_pixel_delta=3, noise_filter="none")
    _, every = _run(frames, base)
    _, frozen = _run(frames, base.replace(reference_update="on_event"))
    assert [events[0].active for _, events in every] == [True, False, False, False, False]
    assert [events[0].active for _, events in frozen] == [True, False, False, True, False]


def test_dimension_mismatch_is_config_error(rng):
    g = build_grid(16, 16, 8)
    _, _, state = rcm_step(Frame(np.zeros((16, 16), np.uint8)), RcmState(), g, SimConfig())
    with pytest.raises(ConfigError):
        rcm_step(Frame(np.zeros((8, 16), np.uint8), 1), state, g, SimConfig())
    with pytest.raises(ConfigError):
        rcm_step(Frame(np.zeros((16, 16), np.uint8), 1), RcmState(np.zeros((8, 8), np.uint8)), g, SimConfig())


def test_order_independence(rng):
    """Scoring regions one at a time in shuffled order reproduces the map."""
    a = rng.integers(0, 256, (32, 32), dtype=np.uint8)
    b = a.copy()
    b[5:20, 7:30] = rng.integers(0, 256, (15, 23), dtype=np.uint8)
    cfg = RAW.replace(spatial_threshold=60, temporal_pixel_delta=4, temporal_threshold=10)
    g, out = _run([a, b], cfg)
    rmap, events = out[1]
    for rid in rng.permutation(g.M):
        rid = int(rid)
        score = mad(g.view(b, rid))
        mc = temporal_mismatch(g.view(b, rid), g.view(a, rid), 4)
        assert (score, mc) == (rmap.spatial_score[rid], rmap.mismatch_count[rid])
        assert rmap[rid][0] == classify(RegionScores(score, mc), cfg)
    assert [ev.rid for ev in events] == list(range(g.M))


@pytest.mark.parametrize("feature", ["mad", "variance", "edge", "corner"])
@pytest.mark.parametrize("noise_filter", ["none", "median3"])
def test_parallel_bands_do_not_change_results(rng, feature, noise_filter):
    frames = [rng.integers(0, 256, (40, 56), dtype=np.uint8) for _ in range(3)]
    cfg = SimConfig(spatial_feature=feature, noise_filter=noise_filter, region_size=8,
                    spatial_threshold=5, corner_response_threshold=1e9)
    _, serial = _run(frames, cfg)
    with ThreadPoolExecutor(4) as pool:
        for bands in (2, 3, 7, 40):
            _, banded = _run(frames, cfg, pool=pool, bands=bands)
            for (m1, e1), (m2, e2) in zip(serial, banded):
                assert m1 == m2 and e1 == e2
