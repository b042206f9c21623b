import json

import pytest

from potholemap.cli import main
from potholemap.store import Store, decode_evidence

from helpers import (
    IST_OFFSET_S,
    PNG_1PX,
    desk_fixture,
    gps_csv,
    northward_fixes,
    pothole_rows,
    session_parts,
    UTC0,
)


def write_parts(tmp_path, parts, evidence_files=None):
    paths = {}
    for name in ("frames", "detections", "gps"):
        p = tmp_path / f"{name}.csv"
        p.write_bytes(parts[name])
        paths[name] = str(p)
    for rel, blob in (evidence_files or {}).items():
        (tmp_path / rel).write_bytes(blob)
    return paths


def run_ingest(tmp_path, parts, store="registry.db", extra=(), evidence_files=None):
    paths = write_parts(tmp_path, parts, evidence_files)
    return main(["ingest", "--frames", paths["frames"],
                 "--detections", paths["detections"], "--gps", paths["gps"],
                 "--store", str(tmp_path / store), *extra])


class TestCalibrate:
    def _run(self, tmp_path, parts):
        paths = write_parts(tmp_path, parts)
        return main(["calibrate", "--frames", paths["frames"],
                     "--gps", paths["gps"]])

    def test_synchronized_prints_zero(self, tmp_path, capsys):
        assert self._run(tmp_path, session_parts(offset_s=0)) == 0
        assert capsys.readouterr().out.strip() == "0"

    def test_ist_offset(self, tmp_path, capsys):
        assert self._run(tmp_path, session_parts()) == 0
        assert capsys.readouterr().out.strip() == str(IST_OFFSET_S)

    def test_median_shrugs_off_bad_fixes(self, tmp_path, capsys):
        # two of twelve GPS timestamps are a second late; median unmoved
        parts = session_parts()
        fixes = northward_fixes(UTC0, 20.29, 85.82, 10.0, 11)
        for k in (3, 7):
            t, lat, lon = fixes[k]
            fixes[k] = (t.replace(second=t.second + 1), lat, lon)
        parts["gps"] = gps_csv(fixes)
        assert self._run(tmp_path, parts) == 0
        assert capsys.readouterr().out.strip() == str(IST_OFFSET_S)

    def test_nonexistent_path_usage_error(self, tmp_path, capsys):
        code = main(["calibrate", "--frames", str(tmp_path / "nope.csv"),
                     "--gps", str(tmp_path / "nope2.csv")])
        assert code == 2
        assert "error[Usage]" in capsys.readouterr().err

    def test_unusable_gps_data_error(self, tmp_path, capsys):
        parts = session_parts()
        parts["gps"] = b"garbage that is not a log"
        assert self._run(tmp_path, parts) == 3
        err = capsys.readouterr().err
        assert "error[MalformedLog]" in err and "(gps)" in err


class TestIngest:
    def test_valid_session(self, tmp_path, capsys):
        parts = session_parts(detection_rows=pothole_rows(range(60, 66), 0.1, 0.1))
        assert run_ingest(tmp_path, parts) == 0
        out = capsys.readouterr().out
        assert "created=1 updated=0 fixed=0 reopened=0" in out
        assert f"offset_s={IST_OFFSET_S}" in out
        assert "frames=300 repaired=0" in out
        assert "detections accepted=6 rejected=0" in out

    def test_nonexistent_gps_exit_2(self, tmp_path, capsys):
        parts = session_parts()
        paths = write_parts(tmp_path, parts)
        code = main(["ingest", "--frames", paths["frames"],
                     "--detections", paths["detections"],
                     "--gps", str(tmp_path / "missing.csv"),
                     "--store", str(tmp_path / "r.db")])
        assert code == 2
        assert "error[Usage]" in capsys.readouterr().err

    def test_all_rejected_exit_3_with_count(self, tmp_path, capsys):
        parts = session_parts()
        parts["detections"] = (b"frame_index,cx,cy,w,h,confidence\n"
                               b"0,0.5,0.5,0,0.1,0.9\n"
                               b"1,0.5,0.5,0.1,0.1,7\n")
        assert run_ingest(tmp_path, parts) == 3
        err = capsys.readouterr().err
        assert "error[AllRecordsRejected]" in err
        assert "2" in err

    def test_explicit_offset_flag(self, tmp_path, capsys):
        parts = session_parts(detection_rows=pothole_rows(range(60, 66), 0.1, 0.1))
        assert run_ingest(tmp_path, parts,
                          extra=("--offset-s", str(IST_OFFSET_S))) == 0
        assert f"offset_s={IST_OFFSET_S}" in capsys.readouterr().out

    def test_road_meta_flag(self, tmp_path, capsys):
        parts = session_parts(detection_rows=pothole_rows(range(60, 66), 0.1, 0.1))
        assert run_ingest(tmp_path, parts,
                          extra=("--road-meta", '{"road_type": "arterial"}')) == 0
        with Store(tmp_path / "registry.db") as store:
            assert store.all_records()[0].road_meta == {"road_type": "arterial"}

    def test_bad_road_meta_exit_2(self, tmp_path, capsys):
        parts = session_parts()
        assert run_ingest(tmp_path, parts, extra=("--road-meta", "{oops")) == 2
        assert "bad --road-meta" in capsys.readouterr().err

    def test_evidence_loaded_relative_to_manifest(self, tmp_path, capsys):
        fx = desk_fixture(evidence=True)
        assert run_ingest(tmp_path, fx, evidence_files=fx["evidence_files"]) == 0
        assert "evidence missing=0 oversize=0" in capsys.readouterr().out
        with Store(tmp_path / "registry.db") as store:
            blobs = [decode_evidence(r.evidence_frame_b64)
                     for r in store.all_records()]
        assert blobs == [PNG_1PX] * 3

    def test_absent_evidence_files_counted_missing(self, tmp_path, capsys):
        fx = desk_fixture(evidence=True)
        assert run_ingest(tmp_path, fx) == 0  # files never written to disk
        assert "evidence missing=3" in capsys.readouterr().out


class TestExport:
    def _populated_store(self, tmp_path):
        run_ingest(tmp_path, desk_fixture())
        return str(tmp_path / "registry.db")

    def test_export_three_records(self, tmp_path, capsys):
        store = self._populated_store(tmp_path)
        out = tmp_path / "potholes.geojson"
        capsys.readouterr()
        assert main(["export", "--store", store, "--out", str(out)]) == 0
        assert "wrote 3 feature(s)" in capsys.readouterr().out
        doc = json.loads(out.read_text())
        assert doc["type"] == "FeatureCollection"
        assert len(doc["features"]) == 3

    def test_status_filter_no_match(self, tmp_path, capsys):
        store = self._populated_store(tmp_path)
        out = tmp_path / "fixed.geojson"
        capsys.readouterr()
        assert main(["export", "--store", store, "--out", str(out),
                     "--status", "fixed"]) == 0
        assert "wrote 0 feature(s)" in capsys.readouterr().out
        assert json.loads(out.read_text())["features"] == []

    def test_empty_store_exports_empty_collection(self, tmp_path, capsys):
        with Store(tmp_path / "empty.db"):
            pass
        out = tmp_path / "empty.geojson"
        assert main(["export", "--store", str(tmp_path / "empty.db"),
                     "--out", str(out)]) == 0
        assert json.loads(out.read_text()) == {"features": [],
                                               "type": "FeatureCollection"}

    def test_missing_store_exit_2(self, tmp_path, capsys):
        code = main(["export", "--store", str(tmp_path / "none.db"),
                     "--out", str(tmp_path / "x.geojson")])
        assert code == 2
        assert "store not found" in capsys.readouterr().err

    def test_unwritable_out_exit_4(self, tmp_path, capsys):
        store = self._populated_store(tmp_path)
        code = main(["export", "--store", store,
                     "--out", str(tmp_path / "no" / "such" / "dir.geojson")])
        assert code == 4
        assert "error[WriteFailed]" in capsys.readouterr().err


class TestReport:
    def test_writes_csv_and_figures(self, tmp_path, capsys):
        run_ingest(tmp_path, desk_fixture())
        out_dir = tmp_path / "report"
        capsys.readouterr()
        assert main(["report", "--store", str(tmp_path / "registry.db"),
                     "--out-dir", str(out_dir)]) == 0
        printed = capsys.readouterr().out.strip().splitlines()
        assert len(printed) == 3
        csv_path = out_dir / "potholes.csv"
        assert csv_path.is_file()
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == ("id,lat,lon,severity,status,first_seen,last_seen,"
                            "observation_count,road_type")
        assert len(lines) == 4
        for name in ("map.png", "counts.png"):
            blob = (out_dir / name).read_bytes()
            assert blob[:8] == b"\x89PNG\r\n\x1a\n"

    def test_missing_store_exit_2(self, tmp_path):
        assert main(["report", "--store", str(tmp_path / "none.db"),
                     "--out-dir", str(tmp_path / "r")]) == 2


class TestParser:
    def test_no_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_flag_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["export", "--store", "x", "--out", "y", "--frob"])
        assert exc.value.code == 2

    def test_bad_gps_format_choice(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["calibrate", "--frames", "f", "--gps", "g",
                  "--gps-format", "nmea"])
        assert exc.value.code == 2

    def test_serve_accepts_overrides(self):
        from potholemap.cli import build_parser
        args = build_parser().parse_args(
            ["serve", "--host", "0.0.0.0", "--port", "9000",
             "--store", "x.db", "--static-dir", "www"])
        assert (args.host, args.port, args.store, args.static_dir) == \
               ("0.0.0.0", 9000, "x.db", "www")
