import pytest

from cohwit.logger import log, summary64, sweep_point


@pytest.fixture
def records():
    seen = []
    handler = log.add(lambda message: seen.append(message.record["extra"].copy()))
    yield seen
    log.remove(handler)


def test_summary64_is_stable():
    assert summary64(("witness", 1.5)) == summary64(("witness", 1.5))
    assert summary64(("witness", 1.5)) != summary64(("witness", 2.0))
    assert len(summary64("anything")) == 8


def test_sweep_point_tags_records(records):
    log.info("outside")
    with sweep_point("key", "omega_e", 1.5, "midpoint"):
        log.info("inside")
    log.info("after")
    assert records[0] == {"process": "main", "point": ""}
    assert records[1] == {"process": summary64("key"), "point": "omega_e=1.5/midpoint"}
    assert records[2] == records[0]


def test_centering_sweep_label(records):
    with sweep_point("key", "centering", "midpoint", "midpoint"):
        log.info("inside")
    assert records[0]["point"] == "midpoint"
