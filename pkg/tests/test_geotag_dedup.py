import math
import random
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from potholemap.detection import BoundingBox, Detection, Severity
from potholemap.geotag_dedup import (
    DedupConfig,
    MissingTimeline,
    PotholeCluster,
    PotholeObservation,
    StatusTransition,
    deduplicate,
    geotag,
    haversine_m,
    reconcile,
    track_coverage_points,
)
from potholemap.gps_sync import GpsFix, GpsTrack, ZERO_OFFSET, parse_gps_log
from potholemap.overlay_time import RawOverlayText, build_timeline
from potholemap.store import PotholeRecord

from helpers import M_PER_DEG_LAT, gps_csv, northward_fixes, render_overlay

UTC = timezone.utc
T0 = datetime(2025, 3, 1, 6, 30, 0, tzinfo=UTC)

# Grid-frozen fixture coordinates (distances verified by the mpmath oracle):
# one 5-dp longitude step at these latitudes gives exact metric spacings.
LINE_LAT = 25.93096          # 1 lon step = 1.0 m, so 2 steps = 2.0 m
UNDER_PAIR = ((16.98000, 85.82000), (16.98001, 85.82002))   # 2.40007 m
OVER_PAIR = ((52.72287, 85.82000), (52.72289, 85.82002))    # 2.59999 m


def obs(lat, lon, t_s=0.0, frame=0, severity=Severity.MEDIUM, conf=0.9,
        evidence=None, session="s1"):
    return PotholeObservation(
        session_id=session, frame_index=frame, coordinate=(lat, lon),
        observed_at_utc=T0 + timedelta(seconds=t_s), severity=severity,
        confidence=conf, evidence_frame=evidence)


def record(rid, lat, lon, status="open", severity=Severity.MEDIUM):
    return PotholeRecord(
        id=rid, coordinate=(lat, lon), severity=severity, status=status,
        first_seen=T0, last_seen=T0, observation_count=1)


class TestHaversine:
    def test_identity_is_zero(self):
        assert haversine_m((20.29, 85.82), (20.29, 85.82)) == 0.0

    def test_two_lat_steps_at_20_29(self):
        d = haversine_m((20.29000, 85.82000), (20.29002, 85.82000))
        assert d == pytest.approx(2.224, abs=0.001)

    def test_one_degree_latitude(self):
        d = haversine_m((0.0, 0.0), (1.0, 0.0))
        assert d == pytest.approx(111194.9, abs=0.1)

    def test_fixture_pair_distances_match_oracle(self):
        assert haversine_m(*UNDER_PAIR) == pytest.approx(2.40007, abs=1e-4)
        assert haversine_m(*OVER_PAIR) == pytest.approx(2.59999, abs=1e-4)
        for pair in (UNDER_PAIR, OVER_PAIR):
            assert haversine_m(*pair) == pytest.approx(
                float(oracles.great_circle_m(*pair)), rel=1e-9)

    @given(st.floats(19.0, 21.0), st.floats(84.0, 86.0),
           st.floats(-0.009, 0.009), st.floats(-0.009, 0.009))
    @settings(max_examples=300)
    def test_agrees_with_oracle_within_point1_percent(self, lat, lon, dlat, dlon):
        a, b = (lat, lon), (lat + dlat, lon + dlon)
        expected = float(oracles.great_circle_m(a, b))
        got = haversine_m(a, b)
        assert got == pytest.approx(expected, rel=1e-3, abs=1e-9)

    @given(st.floats(20.0, 20.009), st.floats(85.0, 85.009),
           st.floats(20.0, 20.009), st.floats(85.0, 85.009),
           st.floats(20.0, 20.009), st.floats(85.0, 85.009))
    @settings(max_examples=300)
    def test_metric_axioms_in_small_box(self, lat1, lon1, lat2, lon2, lat3, lon3):
        a, b, c = (lat1, lon1), (lat2, lon2), (lat3, lon3)
        assert haversine_m(a, b) >= 0
        assert haversine_m(a, b) == haversine_m(b, a)
        assert haversine_m(a, c) <= haversine_m(a, b) + haversine_m(b, c) + 1e-6

    def test_zero_iff_identical_at_5dp(self):
        a = (20.29000, 85.82000)
        b = (20.29001, 85.82000)  # one grid step
        assert haversine_m(a, b) > 1.0


def _timeline(n_frames, fps=30, millis_per_frame=False):
    raws = []
    for i in range(n_frames):
        if millis_per_frame:
            whole, frac = divmod(i, fps)
            text = render_overlay(T0.replace(tzinfo=None) + timedelta(seconds=whole),
                                  millis=round(frac * 1000 / fps))
        else:
            text = render_overlay(T0.replace(tzinfo=None) + timedelta(seconds=i // fps))
        raws.append(RawOverlayText(i, text))
    return build_timeline(raws, nominal_fps=float(fps))


def _track(seconds, lat0=20.0, lon0=85.0, speed=10.0):
    return parse_gps_log(gps_csv(northward_fixes(T0, lat0, lon0, speed, seconds)))


def _detection(frame, w=0.2, h=0.2, conf=0.9):
    return Detection(frame_index=frame,
                     bbox=BoundingBox(cx=0.5, cy=0.5, w=w, h=h), confidence=conf)


class TestGeotag:
    def test_single_detection_interpolates(self):
        timeline = _timeline(60)
        track = _track(3)
        result = geotag([_detection(30)], timeline, track, ZERO_OFFSET)
        assert len(result.observations) == 1
        ob = result.observations[0]
        # frame 30 is overlay second 1 -> 10 m north of the start
        expected_lat = float(oracles.round_half_up(20.0 + 10 / M_PER_DEG_LAT))
        assert ob.coordinate == (expected_lat, 85.0)
        assert ob.observed_at_utc == T0 + timedelta(seconds=1)
        assert result.dropped == 0

    def test_zero_detections(self):
        result = geotag([], _timeline(30), _track(2), ZERO_OFFSET)
        assert result.observations == ()

    def test_three_consecutive_frames_spacing(self):
        # 10 m/s at 30 fps: consecutive frames are 1/3 m apart before
        # rounding; verify the rounded outputs against the locate oracle
        timeline = _timeline(90, millis_per_frame=True)
        track = _track(4)
        result = geotag([_detection(f) for f in (30, 31, 32)],
                        timeline, track, ZERO_OFFSET)
        assert len(result.observations) == 3
        for k, ob in enumerate(result.observations):
            frame_time = timeline.time_for(30 + k)
            elapsed = frame_time.to_seconds() - timeline.time_for(0).to_seconds()
            raw_lat = 20.0 + elapsed * 10 / M_PER_DEG_LAT
            assert ob.coordinate[0] == float(oracles.round_half_up(raw_lat))
        # unrounded spacing is ~0.333 m; quantized millis make it ~10/30 s of travel
        raw = [20.0 + (timeline.time_for(f).to_seconds()
                       - timeline.time_for(0).to_seconds()) * 10 / M_PER_DEG_LAT
               for f in (30, 31, 32)]
        for a, b in zip(raw, raw[1:]):
            d = float(oracles.great_circle_m((a, 85.0), (b, 85.0)))
            assert d == pytest.approx(1 / 3, abs=0.02)

    def test_missing_frame_raises(self):
        with pytest.raises(MissingTimeline):
            geotag([_detection(999)], _timeline(30), _track(2), ZERO_OFFSET)

    def test_locate_failures_dropped_and_counted(self):
        # 120 frames of overlay but only 1 second of track: frames more
        # than 1 s past the last fix drop
        timeline = _timeline(120)
        track = _track(1)
        result = geotag([_detection(0), _detection(119)], timeline, track, ZERO_OFFSET)
        assert len(result.observations) == 1
        assert result.dropped == 1

    def test_severity_and_evidence_attached(self):
        timeline = _timeline(30)
        track = _track(2)
        result = geotag([_detection(0, w=0.3, h=0.3)], timeline, track, ZERO_OFFSET,
                        session_id="sx", evidence_paths={0: "BLOB"})
        ob = result.observations[0]
        assert ob.severity is Severity.HIGH
        assert ob.evidence_frame == "BLOB"
        assert ob.session_id == "sx"


class TestDeduplicate:
    def test_ten_at_one_coordinate(self):
        observations = [obs(20.29, 85.82, t_s=i, frame=i) for i in range(10)]
        clusters = deduplicate(observations)
        assert len(clusters) == 1
        assert len(clusters[0].members) == 10

    def test_two_at_three_meters(self):
        # 3 lon steps at LINE_LAT measure exactly 3.0 m
        a = (LINE_LAT, 85.82000)
        b = (LINE_LAT, 85.82003)
        assert float(oracles.great_circle_m(a, b)) == pytest.approx(3.0, abs=1e-6)
        clusters = deduplicate([obs(*a, t_s=0), obs(*b, t_s=1, frame=1)])
        assert len(clusters) == 2

    def test_line_fixture_greedy_first_fit(self):
        # 0 m, 2.0 m, 4.0 m along a parallel: obs2 joins obs1's cluster,
        # obs3 is 4.0 m from that anchor (despite being 2.0 m from obs2)
        coords = [(LINE_LAT, 85.82000), (LINE_LAT, 85.82002), (LINE_LAT, 85.82004)]
        d01 = float(oracles.great_circle_m(coords[0], coords[1]))
        d02 = float(oracles.great_circle_m(coords[0], coords[2]))
        d12 = float(oracles.great_circle_m(coords[1], coords[2]))
        assert (d01, d02, d12) == (pytest.approx(2.0, abs=1e-6),
                                   pytest.approx(4.0, abs=1e-6),
                                   pytest.approx(2.0, abs=1e-6))
        observations = [obs(*c, t_s=i, frame=i) for i, c in enumerate(coords)]
        clusters = deduplicate(observations)
        assert [len(c.members) for c in clusters] == [2, 1]
        assert clusters[0].members[0].frame_index == 0
        assert clusters[0].members[1].frame_index == 1
        assert clusters[1].members[0].frame_index == 2

    def test_under_and_over_threshold_pairs(self):
        under = [obs(*UNDER_PAIR[0], t_s=0), obs(*UNDER_PAIR[1], t_s=1, frame=1)]
        over = [obs(*OVER_PAIR[0], t_s=0), obs(*OVER_PAIR[1], t_s=1, frame=1)]
        assert len(deduplicate(under)) == 1
        assert len(deduplicate(over)) == 2

    def test_observations_sorted_before_clustering(self):
        # same inputs in any order give the same clustering
        coords = [(LINE_LAT, 85.82000), (LINE_LAT, 85.82002), (LINE_LAT, 85.82004)]
        observations = [obs(*c, t_s=i, frame=i) for i, c in enumerate(coords)]
        shuffled = [observations[2], observations[0], observations[1]]
        a = deduplicate(observations)
        b = deduplicate(shuffled)
        assert [[m.frame_index for m in c.members] for c in a] == \
               [[m.frame_index for m in c.members] for c in b]

    def test_cluster_rollups(self):
        members = [
            obs(20.29, 85.82, t_s=2, frame=2, severity=Severity.LOW, conf=0.5),
            obs(20.29, 85.82, t_s=0, frame=0, severity=Severity.HIGH, conf=0.7,
                evidence="EV-A"),
            obs(20.29, 85.82, t_s=1, frame=1, severity=Severity.MEDIUM, conf=0.9,
                evidence="EV-B"),
        ]
        cluster = deduplicate(members)[0]
        assert cluster.representative_severity is Severity.HIGH
        assert cluster.first_seen == T0
        assert cluster.last_seen == T0 + timedelta(seconds=2)
        assert cluster.best_evidence == "EV-B"  # highest-confidence member with one
        assert cluster.anchor == (20.29, 85.82)

    def test_radius_validation(self):
        with pytest.raises(ValueError):
            DedupConfig(radius_m=0)

    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40)),
                    min_size=1, max_size=25),
           st.floats(1.0, 6.0))
    @settings(max_examples=150)
    def test_partition_and_radius_properties(self, grid_points, radius):
        observations = [
            obs(20.29 + gp[0] * 1e-5, 85.82 + gp[1] * 1e-5, t_s=i, frame=i)
            for i, gp in enumerate(grid_points)
        ]
        cfg = DedupConfig(radius_m=radius)
        clusters = deduplicate(observations, cfg)
        seen = [m.frame_index for c in clusters for m in c.members]
        assert sorted(seen) == sorted(o.frame_index for o in observations)
        for c in clusters:
            for m in c.members:
                assert haversine_m(c.anchor, m.coordinate) <= radius

    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40)),
                    min_size=1, max_size=20))
    @settings(max_examples=100)
    def test_idempotent_on_anchors(self, grid_points):
        observations = [
            obs(20.29 + gp[0] * 1e-5, 85.82 + gp[1] * 1e-5, t_s=i, frame=i)
            for i, gp in enumerate(grid_points)
        ]
        clusters = deduplicate(observations)
        anchors = [obs(*c.anchor, t_s=i, frame=i) for i, c in enumerate(clusters)]
        assert len(deduplicate(anchors)) == len(clusters)

    @given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 60)),
                    min_size=1, max_size=12))
    @settings(max_examples=150)
    def test_matches_bruteforce_greedy_oracle(self, grid_points):
        observations = [
            obs(25.0 + gp[0] * 1e-5, 85.0 + gp[1] * 1e-5, t_s=i, frame=i)
            for i, gp in enumerate(grid_points)
        ]
        clusters = deduplicate(observations)
        oracle = oracles.greedy_clusters([o.coordinate for o in observations], 2.5)
        assert len(clusters) == len(oracle)
        got = [[m.frame_index for m in c.members] for c in clusters]
        assert got == oracle


class TestReconcile:
    def test_covered_without_redetection_becomes_fixed(self):
        # track passes ~5 m west of the pothole
        lon_5m_east = 85.82 + 5 / (M_PER_DEG_LAT * math.cos(math.radians(20.29)))
        rec = record("p1", 20.29, lon_5m_east)
        track = _track(10, lat0=20.2899, lon0=85.82)
        transitions = reconcile([rec], track, [])
        assert transitions == [StatusTransition("p1", "open", "fixed")]

    def test_uncovered_record_untouched(self):
        lon_50m_east = 85.82 + 50 / (M_PER_DEG_LAT * math.cos(math.radians(20.29)))
        rec = record("p1", 20.29, lon_50m_east)
        track = _track(10, lat0=20.2899, lon0=85.82)
        assert reconcile([rec], track, []) == []

    def test_fixed_with_in_radius_cluster_reopens(self):
        rec = record("p1", 20.29000, 85.82000, status="fixed")
        # cluster anchored one lat grid step away (~1.1 m < 2.5 m)
        cluster = deduplicate([obs(20.29001, 85.82000)])[0]
        track = _track(2, lat0=20.2899, lon0=85.82)
        transitions = reconcile([rec], track, [cluster])
        assert transitions == [StatusTransition("p1", "fixed", "reopened")]

    def test_redetected_open_record_not_fixed(self):
        rec = record("p1", 20.29000, 85.82000)
        cluster = deduplicate([obs(20.29001, 85.82000)])[0]
        track = _track(10, lat0=20.2899, lon0=85.82)
        assert reconcile([rec], track, [cluster]) == []

    def test_reopened_record_can_be_fixed_again(self):
        rec = record("p1", 20.29, 85.82, status="reopened")
        track = _track(10, lat0=20.2899, lon0=85.82)
        transitions = reconcile([rec], track, [])
        assert transitions == [StatusTransition("p1", "reopened", "fixed")]

    def test_never_transitions_unapproached_records(self):
        rng = random.Random(4096)
        track = _track(10, lat0=20.2899, lon0=85.82)
        coverage = track_coverage_points(track)
        for _ in range(50):
            lat = 20.28 + rng.random() * 0.02
            lon = 85.81 + rng.random() * 0.02
            rec = record("pX", lat, lon)
            transitions = reconcile([rec], track, [])
            approached = any(
                float(oracles.great_circle_m(p, (lat, lon))) <= 10.0
                for p in coverage)
            if not approached:
                assert transitions == []

    def test_corridor_must_be_positive(self):
        with pytest.raises(ValueError):
            reconcile([], _track(2), [], corridor_m=0)

    def test_coverage_points_interpolate_sparse_fixes(self):
        # fixes 5 s apart get 1 s midpoints
        fixes = [GpsFix(T0, 20.0, 85.0),
                 GpsFix(T0 + timedelta(seconds=5), 20.0005, 85.0)]
        points = track_coverage_points(GpsTrack(fixes=tuple(fixes)))
        assert len(points) == 6
        assert points[1][0] == pytest.approx(20.0001)
