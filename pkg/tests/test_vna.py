import socket
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcskit.errors import (
    AcquisitionError,
    InstrumentConnectError,
    InstrumentDisconnected,
    InstrumentTimeout,
    MalformedResponse,
    PointCountMismatch,
    ValidationError,
)
from rcskit.sweep import FrequencyGrid, FrequencySweep
from rcskit.vna import (
    FaultSpec,
    InstrumentEndpoint,
    MockInstrument,
    SweepConfig,
    acquire_sweep,
    format_sdata,
    parse_sdata,
)

GRID = FrequencyGrid(10e9, 14e9, 2001)


@pytest.fixture(scope="module")
def known_sweep():
    rng = np.random.default_rng(77)
    return FrequencySweep(GRID, 1e-2 * (rng.normal(size=2001) + 1j * rng.normal(size=2001)))


def wait_idle(mock, timeout=2.0):
    t0 = time.monotonic()
    while mock.active_connections and time.monotonic() - t0 < timeout:
        time.sleep(0.01)
    return mock.active_connections


def test_loopback_is_exact(known_sweep):
    with MockInstrument(known_sweep) as mock:
        got = acquire_sweep(mock.endpoint())
        assert got.grid == known_sweep.grid
        assert np.array_equal(got.samples, known_sweep.samples)
        assert wait_idle(mock) == 0
        log = mock.command_log
    assert log[0] == "SENS1:FREQ:STAR 10000000000.0"
    assert "SENS1:SWE:POIN 2001" in log and "SENS1:BAND 100000.0" in log and "SOUR1:POW 0.0" in log
    assert log[-2:] == ["*OPC?", "CALC1:DATA? SDATA"]


def test_mock_records_configuration(known_sweep):
    cfg = SweepConfig(10e9, 14e9, 2001, if_bandwidth_hz=10e3, power_dbm=-5.0)
    with MockInstrument(known_sweep) as mock:
        acquire_sweep(mock.endpoint(cfg))
        s = mock.state.settings
    assert s["SENS1:BAND"] == "10000.0" and s["SOUR1:POW"] == "-5.0"


@pytest.mark.parametrize(
    "fault, error",
    [
        (FaultSpec("disconnect", fraction=0.4), InstrumentDisconnected),
        (FaultSpec("truncate", drop_points=1), PointCountMismatch),
        (FaultSpec("garbage", token_index=11, token="1.0e-3q"), MalformedResponse),
        (FaultSpec("delay", delay_s=0.6), InstrumentTimeout),
    ],
)
def test_fault_modes_raise_their_error(known_sweep, fault, error):
    with MockInstrument(known_sweep, fault) as mock:
        result = None
        with pytest.raises(error) as info:
            result = acquire_sweep(mock.endpoint(timeout_ms=300))
        assert result is None  # never a partial sweep
        assert isinstance(info.value, AcquisitionError)
        assert info.value.code == error.code
        assert wait_idle(mock) == 0


def test_truncate_reports_counts(known_sweep):
    with MockInstrument(known_sweep, "truncate") as mock:
        with pytest.raises(PointCountMismatch) as info:
            acquire_sweep(mock.endpoint())
    assert (info.value.expected, info.value.received) == (2001, 2000)


def test_garbage_names_the_token(known_sweep):
    with MockInstrument(known_sweep, FaultSpec("garbage", token_index=5, token="0.1x3")) as mock:
        with pytest.raises(MalformedResponse) as info:
            acquire_sweep(mock.endpoint())
    assert info.value.token == "0.1x3"
    assert "0.1x3" in str(info.value)


def test_connect_refused():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(InstrumentConnectError):
        acquire_sweep(InstrumentEndpoint("127.0.0.1", port, SweepConfig(10e9, 14e9, 11), 500))


def test_clean_shutdown_and_restart(known_sweep):
    mock = MockInstrument(known_sweep).start()
    addr = mock.address
    acquire_sweep(mock.endpoint())
    mock.stop()
    with pytest.raises(RuntimeError):
        mock.address
    with pytest.raises(InstrumentConnectError):
        acquire_sweep(InstrumentEndpoint(addr[0], addr[1], SweepConfig(10e9, 14e9, 2001), 500))
    mock.stop()  # idempotent


def test_scripted_sweeps_in_order():
    g = FrequencyGrid(1e9, 2e9, 4)
    a = FrequencySweep(g, np.arange(4) + 0j)
    b = FrequencySweep(g, -np.arange(4) + 1j)
    with MockInstrument([a, b]) as mock:
        first = acquire_sweep(mock.endpoint())
        second = acquire_sweep(mock.endpoint())
        third = acquire_sweep(mock.endpoint())
    assert first.equals(a) and second.equals(b) and third.equals(b)


@settings(max_examples=50)
@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_sdata_round_trip_is_bit_exact(zs):
    z = np.array(zs, dtype=complex)
    assert np.array_equal(parse_sdata(format_sdata(z), z.size), z)


@pytest.mark.parametrize(
    "text, error",
    [("1,2,3", MalformedResponse), ("1,2,x,4", MalformedResponse), ("1,2,nan,4", MalformedResponse), ("1,2", PointCountMismatch), ("", PointCountMismatch)],
)
def test_parse_sdata_errors(text, error):
    with pytest.raises(error):
        parse_sdata(text, 2)


@pytest.mark.parametrize(
    "make",
    [
        lambda: SweepConfig(10e9, 14e9, 1),
        lambda: SweepConfig(14e9, 10e9, 11),
        lambda: SweepConfig(10e9, 14e9, 11, if_bandwidth_hz=0),
        lambda: InstrumentEndpoint("h", 0, SweepConfig(10e9, 14e9, 11)),
        lambda: InstrumentEndpoint("h", 70000, SweepConfig(10e9, 14e9, 11)),
        lambda: InstrumentEndpoint("h", 5025, SweepConfig(10e9, 14e9, 11), 0),
        lambda: FaultSpec("melt"),
        lambda: MockInstrument([]),
    ],
)
def test_config_validation(make):
    with pytest.raises(ValidationError):
        make()
