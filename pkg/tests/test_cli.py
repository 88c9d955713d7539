import json
from pathlib import Path

import pytest

from carleman_cip.cli import main, resolve_threads
from carleman_cip.errors import exit_code

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk_1d.ini"


def _snapshot(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "run"
    assert main(["synth", str(DESK), "--set", f"io.dir={d}"]) == 0
    return d


def test_missing_key_exits_2_and_names_it(tmp_path, capsys):
    text = "\n".join(ln for ln in DESK.read_text().splitlines() if not ln.startswith("d_level"))
    cfg = tmp_path / "broken.ini"
    cfg.write_text(text + "\n")
    assert main(["synth", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("ERROR CONFIG_ERROR") and "geometry.d_level" in err


def test_bad_override_exits_2(tmp_path, capsys):
    assert main(["synth", str(DESK), "--set", "nodots=1"]) == 2
    assert "ERROR CONFIG_ERROR" in capsys.readouterr().err


def test_unknown_property_rejected_by_parser():
    with pytest.raises(SystemExit) as exc:
        main(["verify", str(DESK), "--property", "beauty"])
    assert exc.value.code == 2


def test_geometry_guard_maps_to_exit_2(tmp_path, capsys):
    assert main(["synth", str(DESK), "--set", "geometry.x0=0.5", "--set", f"io.dir={tmp_path}"]) == 2
    assert "X0_INSIDE" in capsys.readouterr().err


def test_exit_code_table():
    assert exit_code("CONFIG_ERROR") == 2
    assert exit_code("CFL_VIOLATION") == 3
    assert exit_code("LEFT_SET") == 4
    assert exit_code("MAX_ITERS") == 5
    assert exit_code("SOMETHING_ELSE") == 1


def test_thread_resolution(monkeypatch):
    monkeypatch.setenv("CARLEMAN_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(5) == 5
    assert resolve_threads(0) == 1
    monkeypatch.setenv("CARLEMAN_THREADS", "junk")
    assert resolve_threads(None) >= 1


def test_synth_manifest_is_a_config(synth_dir):
    body = json.loads((synth_dir / "manifest_synth.json").read_text())
    assert body["subcommand"] == "synth"
    assert set(body["artifacts"]) >= {"u_QT.bin", "record_s.bin", "record_p.bin", "medium.json"}


def test_verify_set_convexity_summary(synth_dir, capsys):
    manifest = synth_dir / "manifest_synth.json"
    assert main(["verify", str(manifest), "--property", "set_convexity", "--samples", "10", "--threads", "2"]) == 0
    out = capsys.readouterr().out
    assert "verdict        PASS" in out
    assert "pass fraction  1.000000" in out
    assert (synth_dir / "verify_set_convexity.csv").exists()
    body = json.loads((synth_dir / "manifest_verify.json").read_text())
    assert body["config"]["verify"]["samples"] == 10 and body["passed"] is True


@pytest.mark.slow
def test_solve_rerun_is_bit_identical(synth_dir, capsys):
    manifest = synth_dir / "manifest_synth.json"
    assert main(["solve", str(manifest)]) == 0
    first = _snapshot(synth_dir)
    assert "status      CONVERGED" in capsys.readouterr().out
    assert main(["solve", str(manifest), "--threads", "4"]) == 0
    second = _snapshot(synth_dir)
    names = [n for n in first if not n.startswith(("manifest_", "verify_"))]
    assert {n: first[n] for n in names} == {n: second[n] for n in names}
    # the first run also generated the preprocess files, so its manifest lists more artifacts
    a1 = json.loads(first["manifest_solve.json"])["artifacts"]
    a2 = json.loads(second["manifest_solve.json"])["artifacts"]
    assert set(a2) < set(a1) and all(a1[k] == a2[k] for k in a2)
    assert "c_cells.csv" in first and "trace.csv" in first
    # reconstruct on its own reuses the terminal iterate and reproduces the same files
    assert main(["reconstruct", str(synth_dir / "manifest_solve.json")]) == 0
    third = _snapshot(synth_dir)
    for n in ("c_cells.csv", "c_grid.bin", "c_pointwise.bin", "reconstruct_report.txt"):
        assert third[n] == first[n]
