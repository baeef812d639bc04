import numpy as np
import pytest

from app.map_store import FORMAT_VERSION, MapFileError, load_map, parse_map, render_map, save_map


def test_round_trip_is_bit_exact(mild_map3, tmp_path):
    path = save_map(mild_map3, tmp_path / "m3.map")
    loaded = load_map(path)
    assert np.array_equal(loaded.coefficient_matrix(), mild_map3.coefficient_matrix())
    assert loaded.expansion_point == mild_map3.expansion_point
    assert loaded.final_point == mild_map3.final_point
    assert loaded.params == mild_map3.params
    assert loaded.drive_period == mild_map3.drive_period
    assert (loaded.steps, loaded.time_base, loaded.parameter_rows) == (256, "normalized", (2,))
    assert loaded.built_at == mild_map3.built_at


def test_header_comes_first(mild_map3):
    lines = render_map(mild_map3).splitlines()
    assert lines[0] == FORMAT_VERSION
    assert "m 3" in lines and "n 3" in lines
    assert any(line.startswith("T ") for line in lines)
    assert "parameter_rows 3" in lines


def test_zero_rows_are_omitted(mild_map3):
    text = render_map(mild_map3)
    body = text.split("coefficients\n", 1)[1].splitlines()
    assert len(body) == np.count_nonzero(mild_map3.coefficient_matrix())
    # the omega component is the identity: one row
    assert [row for row in body if row.startswith("3 ")] == ["3 0 0 1 1"]


def test_rows_may_come_in_any_order(mild_map3):
    text = render_map(mild_map3)
    head, body = text.split("coefficients\n", 1)
    shuffled = head + "coefficients\n" + "\n".join(reversed(body.splitlines())) + "\n"
    assert np.array_equal(parse_map(shuffled).coefficient_matrix(), mild_map3.coefficient_matrix())


@pytest.mark.parametrize("mutate, message", [
    (lambda t: t.replace("varmap-map v1", "varmap-map v2"), "first line"),
    (lambda t: t.replace("\nsteps ", "\nstepz "), "unknown header key"),
    (lambda t: t.split("coefficients\n")[0], "missing 'coefficients'"),
    (lambda t: t + "1 9 0 0 1.0\n", "bad exponents"),
    (lambda t: t + "4 1 0 0 1.0\n", "out of range"),
    (lambda t: t + "1 1 0 0 1.0\n", "duplicate row"),
    (lambda t: t + "1 1 0 x\n", "bad coefficient row"),
])
def test_malformed_files_are_rejected(mild_map3, mutate, message):
    with pytest.raises(MapFileError, match=message):
        parse_map(mutate(render_map(mild_map3)))


def test_nonzero_constant_is_rejected(mild_map3):
    with pytest.raises(MapFileError):
        parse_map(render_map(mild_map3) + "1 0 0 0 0.5\n")


def test_missing_file(tmp_path):
    with pytest.raises(MapFileError):
        load_map(tmp_path / "absent.map")
