import io
import shutil
import xml.etree.ElementTree as ET

import pytest

from qbm2ho import harness


def test_goldens_are_reproduced_byte_for_byte():
    res = harness.check_goldens()
    assert set(res) == set(harness.GOLDEN_FILES) and all(res.values())


def test_missing_golden_names_the_regeneration_command(tmp_path):
    d = tmp_path / "golden"
    shutil.copytree(harness.GOLDEN_DIR, d)
    (d / "coefficients.csv").unlink()
    with pytest.raises(harness.GoldenMissing, match="qbm2ho.harness regenerate"):
        harness.check_goldens(str(d))


def test_regenerate_into_fresh_directory(tmp_path):
    rec = harness.regenerate_goldens(str(tmp_path))
    assert rec["config_hash"] == harness.config_hash(harness.REGRESSION)
    assert all(harness.check_goldens(str(tmp_path)).values())
    # a dt/2 rerun moves the tabulated results only at the truncation level
    ref = rec["refinement"]
    assert ref["u1_u2_max_diff"] < 1e-4 and ref["trajectory_max_diff"] < 1e-3


def test_fault_injection_fails_only_the_oracle_criterion():
    buf = io.StringIO()
    results = harness.run_acceptance_suite(fault="delta-sign", stream=buf)
    failed = [r.number for r in results if not r.passed]
    assert failed == [2]
    assert results[1].details["diagnosis"] == "Delta-sign"
    lines = buf.getvalue().splitlines()
    assert len(lines) == 7 and lines[1].startswith("[FAIL] criterion 2")
    xml = ET.fromstring(harness.junit_xml(results))
    assert xml.get("tests") == "7" and xml.get("failures") == "1"
    assert xml.find("testcase[@name='criterion_2']/failure") is not None


def test_cli_entry_points(tmp_path, capsys):
    assert harness.main(["check-golden"]) == 0
    assert "same kernels.csv" in capsys.readouterr().out
