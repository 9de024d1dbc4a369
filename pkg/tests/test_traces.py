import csv

import numpy as np
import pytest

from wholebody_mpc.loop import SimTrace, run_scenario
from wholebody_mpc.scenario import corpus_path, parse_scenario
from wholebody_mpc.traces import BASE_COLUMNS, read_trace, trace_columns, write_trace

EXPECTED_HEADER = (
    "t,c_x,c_y,c_z,cd_x,cd_y,cd_z,cdd_x,cdd_y,cdd_z,zmp_x,zmp_y,zmp_lb_x,zmp_ub_x,"
    "zmp_lb_y,zmp_ub_y,dz_x,dz_y,fc_x,fc_y,fc_z,contact_id,q_1,q_2,q_3,q_4,q_5,q_6"
)


@pytest.fixture(scope="module")
def short_trace():
    sc = parse_scenario(corpus_path("reach_object"))
    sc = parse_scenario_with_duration(sc, 3 * sc.horizon.preview.dt)
    return run_scenario(sc)


def parse_scenario_with_duration(sc, duration):
    from wholebody_mpc.scenario import parse_document
    doc = dict(sc.document, duration=duration)
    return parse_document(doc)


def test_header_contract():
    assert ",".join(trace_columns(6)) == EXPECTED_HEADER
    assert BASE_COLUMNS[-1] == "contact_id"


def test_empty_trace_is_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_trace(SimTrace("empty", 6), path)
    assert path.read_text().splitlines() == [EXPECTED_HEADER]


def test_three_cycles_four_lines(short_trace, tmp_path):
    assert len(short_trace) == 3
    path = tmp_path / "t.csv"
    write_trace(short_trace, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == EXPECTED_HEADER
    assert all(len(row) == 28 for row in csv.reader(lines))


def test_reread_is_exact(short_trace, tmp_path):
    path = tmp_path / "t.csv"
    write_trace(short_trace, path)
    back = read_trace(path)
    for a, b in zip(short_trace.records, back.records):
        assert a.time == b.time
        for name in ("com", "com_vel", "com_acc", "zmp", "zmp_lower", "zmp_upper",
                     "delta_z", "force", "arm_angles"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert a.contact_id == b.contact_id


def test_numbers_use_scientific_notation(short_trace, tmp_path):
    path = tmp_path / "t.csv"
    write_trace(short_trace, path)
    row = next(r for i, r in enumerate(csv.reader(path.open())) if i == 1)
    assert all("e" in field for field in row[:21] + row[22:])


def test_non_finite_values_rejected(short_trace, tmp_path):
    rec = short_trace.records[0]
    bad = SimTrace("bad", 6, [type(rec)(**{**rec.__dict__, "com": np.array([np.nan, 0, 0.8])})])
    with pytest.raises(ValueError):
        write_trace(bad, tmp_path / "bad.csv")


def test_unwritable_path(short_trace, tmp_path):
    with pytest.raises(OSError):
        write_trace(short_trace, tmp_path / "missing" / "dir" / "t.csv")


def test_malformed_file(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(EXPECTED_HEADER + "\n1,2,3\n")
    with pytest.raises(ValueError):
        read_trace(path)
