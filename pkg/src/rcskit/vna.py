"""SCPI-over-TCP acquisition of a single S11 sweep, plus a scriptable mock VNA.

Command sequence sent by ``acquire_sweep`` (newline terminated)::

    SENS1:FREQ:STAR <f_start Hz>
    SENS1:FREQ:STOP <f_stop Hz>
    SENS1:SWE:POIN <n_points>
    SENS1:BAND <if_bandwidth Hz>
    SOUR1:POW <power dBm>
    FORM:DATA ASC
    INIT1:CONT OFF
    INIT1:IMM
    *OPC?                      -> "1"
    CALC1:DATA? SDATA          -> "re0,im0,re1,im1,...,re(n-1),im(n-1)"

Numbers are written with Python ``repr`` so a float survives the trip
bit-exactly. A sweep is only built once the full response has been read
and every token parsed.
"""

from __future__ import annotations

import math
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InstrumentConnectError,
    InstrumentDisconnected,
    InstrumentTimeout,
    MalformedResponse,
    PointCountMismatch,
    ValidationError,
)
from .sweep import FrequencyGrid, FrequencySweep, validate_sweep

FAULT_MODES = ("disconnect", "truncate", "garbage", "delay")
_MAX_LINE = 64 * 1024 * 1024


@dataclass(frozen=True)
class SweepConfig:
    f_start: float
    f_stop: float
    n_points: int
    if_bandwidth_hz: float = 100e3
    power_dbm: float = 0.0

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValidationError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.if_bandwidth_hz > 0:
            raise ValidationError("if_bandwidth_hz must be > 0")
        self.grid  # validates the span

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.f_start, self.f_stop, int(self.n_points))

    def commands(self) -> list[str]:
        return [
            f"SENS1:FREQ:STAR {self.f_start!r}",
            f"SENS1:FREQ:STOP {self.f_stop!r}",
            f"SENS1:SWE:POIN {int(self.n_points)}",
            f"SENS1:BAND {self.if_bandwidth_hz!r}",
            f"SOUR1:POW {self.power_dbm!r}",
            "FORM:DATA ASC",
            "INIT1:CONT OFF",
            "INIT1:IMM",
        ]


@dataclass(frozen=True)
class InstrumentEndpoint:
    host: str
    port: int
    sweep_config: SweepConfig
    timeout_ms: float = 5000.0

    def __post_init__(self):
        if not 1 <= int(self.port) <= 65535:
            raise ValidationError(f"port must lie in [1, 65535], got {self.port}")
        if not self.timeout_ms > 0:
            raise ValidationError("timeout_ms must be > 0")


class _Link:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.buf = b""

    def send(self, line: str) -> None:
        try:
            self.sock.sendall(line.encode("ascii") + b"\n")
        except socket.timeout as exc:
            raise InstrumentTimeout(f"timed out sending {line.split()[0]!r}") from exc
        except OSError as exc:
            raise InstrumentDisconnected(f"connection lost sending {line.split()[0]!r}: {exc}") from exc

    def readline(self, what: str) -> str:
        while b"\n" not in self.buf:
            try:
                chunk = self.sock.recv(1 << 16)
            except socket.timeout as exc:
                raise InstrumentTimeout(f"timed out waiting for {what}") from exc
            except OSError as exc:
                raise InstrumentDisconnected(f"connection lost reading {what}: {exc}") from exc
            if not chunk:
                raise InstrumentDisconnected(
                    f"instrument closed the connection during {what} after {len(self.buf)} bytes"
                )
            self.buf += chunk
            if len(self.buf) > _MAX_LINE:
                raise MalformedResponse(f"{what} exceeds {_MAX_LINE} bytes without a terminator", "")
        line, self.buf = self.buf.split(b"\n", 1)
        try:
            return line.decode("ascii").strip()
        except UnicodeDecodeError as exc:
            raise MalformedResponse(f"non-ASCII bytes in {what}", repr(line[:32])) from exc

    def query(self, line: str) -> str:
        self.send(line)
        return self.readline(f"reply to {line!r}")


def parse_sdata(text: str, n_points: int) -> np.ndarray:
    """Comma-separated re/im pairs to a complex array; strict."""
    tokens = text.split(",") if text else []
    values = np.empty(len(tokens))
    for i, tok in enumerate(tokens):
        try:
            v = float(tok)
        except ValueError:
            raise MalformedResponse(f"token {i} of SDATA is not a number: {tok.strip()!r}", tok.strip()) from None
        if not math.isfinite(v):
            raise MalformedResponse(f"token {i} of SDATA is not finite: {tok.strip()!r}", tok.strip())
        values[i] = v
    if len(tokens) % 2:
        raise MalformedResponse(f"SDATA has an odd number of values ({len(tokens)})", tokens[-1].strip())
    got = len(tokens) // 2
    if got != n_points:
        raise PointCountMismatch(n_points, got)
    return values[0::2] + 1j * values[1::2]


def acquire_sweep(endpoint: InstrumentEndpoint, label: str = "target") -> FrequencySweep:
    """Configure, trigger and read one sweep. All-or-nothing: any fault raises."""
    cfg = endpoint.sweep_config
    timeout = endpoint.timeout_ms / 1000.0
    try:
        sock = socket.create_connection((endpoint.host, int(endpoint.port)), timeout=timeout)
    except socket.timeout as exc:
        raise InstrumentTimeout(f"connect to {endpoint.host}:{endpoint.port} timed out") from exc
    except OSError as exc:
        raise InstrumentConnectError(f"cannot connect to {endpoint.host}:{endpoint.port}: {exc}") from exc
    with sock:
        sock.settimeout(timeout)
        link = _Link(sock)
        for cmd in cfg.commands():
            link.send(cmd)
        opc = link.query("*OPC?")
        if opc != "1":
            raise MalformedResponse(f"*OPC? answered {opc!r}, expected '1'", opc)
        data = link.query("CALC1:DATA? SDATA")
    samples = parse_sdata(data, int(cfg.n_points))
    return validate_sweep(cfg.grid, samples, label)


def format_sdata(samples) -> str:
    s = np.asarray(samples, dtype=complex)
    return ",".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in s)


# --- mock instrument ---------------------------------------------------------------


@dataclass
class FaultSpec:
    """Fault injected into the reply to ``CALC1:DATA? SDATA``.

    ``disconnect``: send ``fraction`` of the reply then close.
    ``truncate``: drop the last ``drop_points`` points.
    ``garbage``: replace token ``token_index`` with ``token``.
    ``delay``: sleep ``delay_s`` before replying.
    """

    mode: str
    fraction: float = 0.5
    drop_points: int = 1
    token_index: int = 7
    token: str = "0.1x3"
    delay_s: float = 1.0

    def __post_init__(self):
        if self.mode not in FAULT_MODES:
            raise ValidationError(f"unknown fault mode {self.mode!r}; expected one of {FAULT_MODES}")


@dataclass
class _MockState:
    sweeps: list
    fault: FaultSpec | None
    settings: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    active: int = 0
    served: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        st: _MockState = self.server.state
        with st.lock:
            st.active += 1
        try:
            while True:
                raw = self.rfile.readline()
                if not raw:
                    return
                cmd = raw.decode("ascii", "replace").strip()
                with st.lock:
                    st.log.append(cmd)
                if not self._dispatch(cmd, st):
                    return
        except (ConnectionError, OSError):
            return
        finally:
            with st.lock:
                st.active -= 1

    def _reply(self, text: str) -> None:
        self.wfile.write(text.encode("ascii") + b"\n")
        self.wfile.flush()

    def _dispatch(self, cmd: str, st: _MockState) -> bool:
        head, _, arg = cmd.partition(" ")
        head = head.upper()
        if head == "*OPC?":
            self._reply("1")
        elif head == "*IDN?":
            self._reply("rcskit,MockVNA,0,1.0")
        elif head == "CALC1:DATA?":
            return self._send_data(st)
        elif not head.endswith("?"):
            st.settings[head] = arg
        else:
            self._reply("")
        return True

    def _send_data(self, st: _MockState) -> bool:
        with st.lock:
            sweep = st.sweeps[min(st.served, len(st.sweeps) - 1)]
            st.served += 1
        samples = np.asarray(sweep.samples)
        f = st.fault
        if f and f.mode == "truncate":
            samples = samples[: max(0, samples.size - f.drop_points)]
        text = format_sdata(samples)
        if f and f.mode == "garbage":
            toks = text.split(",")
            toks[min(f.token_index, len(toks) - 1)] = f.token
            text = ",".join(toks)
        if f and f.mode == "delay":
            time.sleep(f.delay_s)
        if f and f.mode == "disconnect":
            payload = text.encode("ascii")
            self.wfile.write(payload[: int(len(payload) * f.fraction)])
            self.wfile.flush()
            return False
        self._reply(text)
        return True


class _Server(socketserver.TCPServer):
    allow_reuse_address = True
    daemon_threads = True


class MockInstrument:
    """Local mock VNA serving scripted sweeps, one connection at a time.

    Use as a context manager::

        with MockInstrument([sweep]) as mock:
            acquire_sweep(mock.endpoint(config))
    """

    def __init__(self, sweeps, fault: FaultSpec | str | None = None, host: str = "127.0.0.1", port: int = 0):
        sweeps = [sweeps] if isinstance(sweeps, FrequencySweep) else list(sweeps)
        if not sweeps:
            raise ValidationError("mock needs at least one scripted sweep")
        if isinstance(fault, str):
            fault = FaultSpec(fault)
        self.state = _MockState(sweeps, fault)
        self._host, self._port = host, port
        self._server: _Server | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> "MockInstrument":
        try:
            self._server = _Server((self._host, self._port), _Handler)
        except OSError as exc:
            raise InstrumentConnectError(f"mock cannot bind {self._host}:{self._port}: {exc}") from exc
        self._server.state = self.state
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self, timeout: float = 5.0) -> None:
        if self._server is None:
            return
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout)
        self._server = None

    def __enter__(self) -> "MockInstrument":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    @property
    def address(self) -> tuple[str, int]:
        if self._server is None:
            raise RuntimeError("mock instrument not running")
        return self._server.server_address[:2]

    @property
    def active_connections(self) -> int:
        with self.state.lock:
            return self.state.active

    @property
    def command_log(self) -> list[str]:
        with self.state.lock:
            return list(self.state.log)

    def endpoint(self, config: SweepConfig | None = None, timeout_ms: float = 2000.0) -> InstrumentEndpoint:
        if config is None:
            g = self.state.sweeps[0].grid
            config = SweepConfig(g.f_start, g.f_stop, g.n_samples)
        host, port = self.address
        return InstrumentEndpoint(host, port, config, timeout_ms)
