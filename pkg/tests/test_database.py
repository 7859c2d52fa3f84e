import pytest

from database import DatabaseManager, RunRepository, get_db_session
from sim_config import RunStatus
from utils import OutputSession, format_value, read_csv, write_csv


# ===== RUN REGISTRY =====

def test_run_lifecycle(tmp_path):
    url = f"sqlite:///{tmp_path / 'registry.db'}"
    with get_db_session(url) as db:
        first = RunRepository.create_run(db, "spectrum", "abc123def456", seed=1)
        second = RunRepository.create_run(db, "hbt", "abc123def456", seed=2, preset="fig3")
        first_id, second_id = first.id, second.id
        assert first.status == RunStatus.RUNNING

    with get_db_session(url) as db:
        RunRepository.finish_run(db, first_id, ["out/spectrum.csv"], {"g2_max": 1.7})
        RunRepository.fail_run(db, second_id, "boom")
        assert RunRepository.finish_run(db, 999, []) is None

    with get_db_session(url) as db:
        runs = RunRepository.recent_runs(db)
        assert [run.id for run in runs] == [second_id, first_id]
        assert runs[0].status == RunStatus.FAILED and runs[0].error == "boom"
        assert runs[0].preset == "fig3"
        assert runs[1].outputs_list() == ["out/spectrum.csv"]
        assert runs[1].summary_dict() == {"g2_max": 1.7}
        assert runs[1].finished_at is not None
        only_hbt = RunRepository.recent_runs(db, command="hbt")
        assert [run.command for run in only_hbt] == ["hbt"]
        assert len(RunRepository.recent_runs(db, limit=1)) == 1


def test_manager_is_shared_per_url(tmp_path):
    url = f"sqlite:///{tmp_path / 'shared.db'}"
    assert DatabaseManager(url) is DatabaseManager(url)


def test_session_rolls_back_on_error(tmp_path):
    url = f"sqlite:///{tmp_path / 'rollback.db'}"
    with pytest.raises(RuntimeError):
        with get_db_session(url) as db:
            RunRepository.create_run(db, "spectrum", "000000000000")
            raise RuntimeError("interrupted")
    with get_db_session(url) as db:
        assert RunRepository.recent_runs(db) == []


# ===== CSV OUTPUT =====

def test_format_value():
    assert format_value(True) == "1"
    assert format_value(7) == "7"
    assert format_value(0.1 + 0.2) == "0.3"
    assert format_value(1.0e-12) == "1e-12"
    assert format_value("label") == "label"


def test_csv_round_trip(tmp_path):
    path = write_csv(tmp_path / "sub" / "data.csv", ["tau_s", "g2"], [(0.0, 0.5), (1e-12, 0.75)],
                     {"command": "g2tau", "units": "s"})
    parsed = read_csv(path)
    assert parsed["header"] == {"command": "g2tau", "units": "s"}
    assert parsed["columns"] == ["tau_s", "g2"]
    assert parsed["rows"] == [[0.0, 0.5], [1e-12, 0.75]]


def test_csv_layout(tmp_path):
    path = write_csv(tmp_path / "peaks.csv", ["m", "area"], [(0, 0.1 + 0.2), (1, 2.5e-7)], {"units": "ψ counts"})
    assert path.read_text(encoding="utf-8") == "# units: ψ counts\nm,area\n0,0.3\n1,2.5e-07\n"
    empty = write_csv(tmp_path / "empty.csv", ["m", "area"], [])
    assert empty.read_text(encoding="utf-8") == "m,area\n"
    assert read_csv(empty)["rows"] == []


def test_output_session_discards_partial_files(tmp_path):
    with pytest.raises(ValueError):
        with OutputSession(tmp_path / "run", {"seed": 3}) as session:
            written = session.csv("first.csv", ["x"], [(1,)])
            assert written.is_file()
            raise ValueError("failed midway")
    assert not (tmp_path / "run" / "first.csv").exists()


def test_output_session_keeps_files_and_header(tmp_path):
    with OutputSession(tmp_path / "run", {"seed": 3}) as session:
        path = session.csv("data.csv", ["x"], [(1,)], extra_header={"units": "none"})
    assert session.names == [str(path)]
    assert read_csv(path)["header"] == {"seed": "3", "units": "none"}
