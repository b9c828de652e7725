import json
import math
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jjtorus import cli
from jjtorus.cache import ResultCache, content_key
from jjtorus.config import RunConfig, load_config, parse_config_text
from jjtorus.export import dumps_csv, dumps_json, read_csv
from jjtorus.scan import ScanGrid


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_portrait_2x2_has_four_rows(capsys):
    code, out, _ = run(capsys, "portrait", "--nx", 2, "--ny", 2, "--format", "csv")
    assert code == 0
    header, rows = read_csv(out)
    assert header == ["B", "A", "rho", "locked"] and len(rows) == 4


def test_portrait_files(tmp_path, capsys):
    out = tmp_path / "p.json"
    code, text, _ = run(capsys, "portrait", "--nx", 3, "--ny", 2, "--overlay", 0,
                        "--A-range", -3, 3, "--out", out)
    assert code == 0
    info = json.loads(text)
    ET.parse(info["svg"])
    header, rows = read_csv(open(info["csv"]).read())
    assert len(rows) == 6


def test_mirrored_portraits(capsys):
    _, a, _ = run(capsys, "portrait", "--nx", 5, "--ny", 3, "--B-range", -1.5, 1.5,
                  "--A-range", 0.5, 2.5, "--format", "json")
    _, b, _ = run(capsys, "portrait", "--nx", 5, "--ny", 3, "--B-range", 1.5, -1.5,
                  "--A-range", -0.5, -2.5, "--format", "json")
    ra, rb = np.array(json.loads(a)["rho"]), np.array(json.loads(b)["rho"])
    # B -> -B negates rho, A -> -A leaves it unchanged
    assert np.allclose(ra, -rb, atol=1e-2)
    assert np.array_equal(np.array(json.loads(a)["locked"]), np.array(json.loads(b)["locked"]))


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=6))
def test_csv_round_trip(values):
    _, rows = read_csv(dumps_csv([f"c{i}" for i in range(len(values))], [values]))
    assert all(abs(x - y) <= 1e-12 * max(1.0, abs(y)) for x, y in zip(rows[0], values))


def test_json_nonfinite_and_complex():
    d = json.loads(dumps_json({"x": math.inf, "y": math.nan, "z": 1 + 2j, "v": np.arange(2)}))
    assert d == {"x": "inf", "y": "nan", "z": {"re": 1.0, "im": 2.0}, "v": [0, 1]}


def test_cache_hit_equals_cold_run(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("JJTORUS_CACHE_DIR", str(tmp_path / "c"))
    _, cold, _ = run(capsys, "rotation", 1.2, 0.7, 1.0)
    _, hot, _ = run(capsys, "rotation", 1.2, 0.7, 1.0)
    assert cold == hot
    assert len(list((tmp_path / "c").iterdir())) == 1
    _, other, _ = run(capsys, "rotation", 1.2, 0.7, 1.0, "--tol", 1e-10)
    assert len(list((tmp_path / "c").iterdir())) == 2


def test_cache_keys():
    assert content_key("op", [1.0, 2.0], [1e-11]) == content_key("op", [1.0, 2.0], [1e-11])
    assert content_key("op", [1.0, 2.0], [1e-11]) != content_key("op", [1.0, 2.0], [1e-10])
    c = ResultCache("")
    assert not c.enabled and c.cached("op", [], [], lambda: {"a": 1}) == {"a": 1}


def test_config_parsing(tmp_path):
    assert parse_config_text("# comment\ntol = 1e-10\nthreads=2  # inline\n") == {"tol": 1e-10, "threads": 2}
    with pytest.raises(ValueError):
        parse_config_text("bogus = 1")
    with pytest.raises(ValueError):
        parse_config_text("tol 3")
    path = tmp_path / "run.cfg"
    path.write_text("tol = 1e-10\nformat = csv\n")
    cfg = load_config(str(path), tol=1e-12)
    assert cfg.tol == 1e-12 and cfg.format == "csv"
    with pytest.raises(ValueError):
        RunConfig(tol=-1.0)


def test_bad_config_is_usage_error(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("nonsense = 3\n")
    with pytest.raises(SystemExit) as info:
        cli.main(["rotation", "1", "1", "1", "--config", str(path)])
    assert info.value.code == 2


def test_unknown_suite_exit_2():
    with pytest.raises(SystemExit) as info:
        cli.main(["verify", "nosuch"])
    assert info.value.code == 2


def test_domain_error_exit_2(capsys):
    code, _, err = run(capsys, "rotation", 1, 1, 0)
    assert code == 2 and "omega" in err


def test_not_found_is_empty_result(capsys):
    code, out, err = run(capsys, "constriction", "find", 0, 1.0, 0.5, 1.0)
    assert code == 1
    assert json.loads(out)["result"] == [] and err


def test_constriction_list_and_count(capsys):
    code, out, _ = run(capsys, "constriction", "list", 0, 1.0, 10.0, "--format", "csv")
    header, rows = read_csv(out)
    assert code == 0 and len(rows) == 3 and header[0] == "ell"
    code, out, _ = run(capsys, "constriction", "count", 0, 1.0, 10.0)
    assert json.loads(out)["count"] == 3


def test_poincare_json(capsys):
    code, out, _ = run(capsys, "poincare", "map", 0, 1e-4, 2.404825557695773)
    d = json.loads(out)
    assert code == 0 and d["defined"] and d["s1"] == pytest.approx(5.520078110286311, abs=1e-3)
    code, out, _ = run(capsys, "poincare", "divisor", 0, 2.404825557695773)
    assert json.loads(out)["s1"] == pytest.approx(5.520078110286311, abs=1e-9)


def test_poincare_not_defined_serialised(capsys):
    # the leaf meets a singularity before returning to chi = 0
    code, out, _ = run(capsys, "poincare", "map", 1.5, 1.0, 1.0)
    d = json.loads(out)
    assert code == 1 and d["defined"] is False and d["reason"]


def test_leaf_records(capsys):
    code, out, _ = run(capsys, "leaf", "integrate", 1.2, 0.0, 1.5, 1.5, 11.5, "--samples", 21,
                       "--format", "csv")
    header, rows = read_csv(out)
    events = [r for r in rows if r[4]]
    assert code == 0 and header == ["s", "chi", "a", "chart", "event"]
    # grid samples plus one row per singularity
    assert len(rows) == 21 + len(events) and {r[4] for r in events} == {"zero-type", "pole-type"}


def test_monodromy_command(capsys):
    code, out, _ = run(capsys, "monodromy", 0, 0.3, 1.1, 2.0)
    assert code == 0 and json.loads(out)["liouville_error"] < 1e-8


def test_verify_bessel_fast(capsys):
    t0 = time.perf_counter()
    code, out, err = run(capsys, "verify", "bessel")
    assert code == 0 and time.perf_counter() - t0 < 10
    assert json.loads(out)["passed"] and "[PASS]" in err


def test_scan_resume(tmp_path):
    path = str(tmp_path / "scan.npz")
    full = ScanGrid((-1.5, 1.5), (0.0, 2.0), 1.0, 4, 3).run()
    part = ScanGrid((-1.5, 1.5), (0.0, 2.0), 1.0, 4, 3).run(rows=[1], checkpoint=path)
    assert not part.complete
    resumed = ScanGrid.load(path)
    assert resumed.resume_token() == [0, 2]
    resumed.run()
    assert resumed.complete and np.array_equal(resumed.cells, full.cells)


def test_curve_file_reverifies(tmp_path, capsys):
    from jjtorus.phaselock import identity_residual
    out = tmp_path / "c.csv"
    code, _, _ = run(capsys, "constriction", "trace", 0, 1, "--a-max", 0.2, "--format", "csv", "--out", out)
    header, rows = read_csv(out.read_text())
    assert code == 0 and header == ["a", "s", "residual", "deriv_residual"]
    for a, s, res, dres in rows[::3]:
        assert identity_residual(0, 0, a, s) == pytest.approx((res, dres), abs=1e-12)
