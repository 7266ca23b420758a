import pickle

import pytest

from scanforge.errors import (ConfigError, DataError, EditStepError, EmptyCloud,
                              MalformedBoxLine, MetricError, NoGroundPoints,
                              PipelineError, ScanForgeError)


def test_exit_codes():
    assert ScanForgeError("x").exit_code == 1
    assert ConfigError("x").exit_code == 2
    assert DataError("x").exit_code == 3
    assert PipelineError("x").exit_code == 4
    assert MetricError("x").exit_code == 5
    assert EmptyCloud("x").exit_code == 5


def test_config_error_line_prefix():
    err = ConfigError("bad value", line=7)
    assert "line 7" in str(err) and err.line == 7
    assert ConfigError("no line").line is None


def test_edit_step_error_inherits_cause_code():
    cause = NoGroundPoints("nothing to stand on")
    err = EditStepError("insertion 2 (object 'a')", cause)
    assert err.exit_code == 4
    assert "insertion 2" in str(err) and "stand on" in str(err)
    assert err.cause is cause


def test_errors_pickle_roundtrip():
    for err in (ConfigError("bad", line=3),
                MalformedBoxLine("short", line=9),
                EditStepError("removal 0 (box 1)", NoGroundPoints("none"))):
        back = pickle.loads(pickle.dumps(err))
        assert type(back) is type(err)
        assert str(back) == str(err)
        assert back.exit_code == err.exit_code


def test_hierarchy_is_catchable():
    with pytest.raises(ScanForgeError):
        raise EmptyCloud("empty")
    with pytest.raises(PipelineError):
        raise EditStepError("step", NoGroundPoints("x"))
