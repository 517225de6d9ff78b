"""Adapter for out-of-process maneuver oracles.

Wire protocol (newline-delimited JSON, one in-flight request per
connection):

    request : {"v":1, "format":"short"|"long", "scenario":{...}}
    response: {"v":1, "action":"GO_STRAIGHT"|"TURN_LEFT"|"TURN_RIGHT",
               "rationale":"...", "hazard_ids":[...]}

Two transports: a spawned subprocess speaking the protocol on
stdin/stdout (``exec:CMD``), or a TCP stream (``tcp:HOST:PORT``). The
subprocess stays alive across requests, so per-request overhead is one
line write and one line read.
"""

from __future__ import annotations

import os
import select
import shlex
import socket
import subprocess
import time

from . import jsonio
from .oracle import Format, MetaDecision
from .scene import MetaAction, Scenario, scenario_to_dict

DEFAULT_TIMEOUT = 10.0


class OracleError(Exception):
    """Base class for external-oracle failures."""


class OracleTimeout(OracleError):
    def __init__(self, endpoint: str, timeout: float):
        super().__init__(f"oracle {endpoint} did not answer within {timeout:.3g} s")
        self.endpoint = endpoint
        self.timeout = timeout


class OracleProtocolError(OracleError):
    """Malformed or invalid response; carries the raw payload."""

    def __init__(self, endpoint: str, message: str, payload: str = ""):
        detail = f"oracle {endpoint}: {message}"
        if payload:
            detail += f" (payload: {payload!r})"
        super().__init__(detail)
        self.endpoint = endpoint
        self.payload = payload


def _encode_request(scenario: Scenario, format: Format) -> bytes:
    request = {"v": 1, "format": format.value, "scenario": scenario_to_dict(scenario)}
    return (jsonio.dumps(request) + "\n").encode("utf-8")


def _parse_response(raw: str, scenario: Scenario, format: Format,
                    endpoint: str) -> MetaDecision:
    try:
        obj = jsonio.loads(raw)
    except ValueError as e:
        raise OracleProtocolError(endpoint, f"invalid JSON: {e}", raw) from None
    if not isinstance(obj, dict):
        raise OracleProtocolError(endpoint, "response is not an object", raw)
    if obj.get("v") != 1:
        raise OracleProtocolError(endpoint, f"unsupported version {obj.get('v')!r}", raw)
    label = obj.get("action")
    try:
        action = MetaAction(label)
    except ValueError:
        raise OracleProtocolError(endpoint, f"unknown action label {label!r}", raw) from None
    rationale = obj.get("rationale")
    if not isinstance(rationale, str) or not rationale:
        raise OracleProtocolError(endpoint, "missing or empty rationale", raw)
    hazard_ids = obj.get("hazard_ids", [])
    if not isinstance(hazard_ids, list) or not all(
        isinstance(i, int) and not isinstance(i, bool) for i in hazard_ids
    ):
        raise OracleProtocolError(endpoint, "hazard_ids must be a list of integers", raw)
    decision = MetaDecision(
        action=action,
        rationale_short=rationale,
        rationale_long=rationale,
        hazard_ids=tuple(sorted(hazard_ids)),
    )
    try:
        decision.validate(scenario)
    except ValueError as e:
        raise OracleProtocolError(endpoint, str(e), raw) from None
    return decision


class ExecOracle:
    """Oracle behind a spawned subprocess speaking the stdio line protocol."""

    def __init__(self, command: str | list[str], timeout: float = DEFAULT_TIMEOUT):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.endpoint = "exec:" + " ".join(self.command)
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as e:
            raise OracleError(f"cannot spawn {self.endpoint}: {e}") from None
        self._buffer = b""

    def _read_line(self, deadline: float) -> str:
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise OracleTimeout(self.endpoint, self.timeout)
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise OracleTimeout(self.endpoint, self.timeout)
            chunk = os.read(fd, 65536)
            if not chunk:
                raise OracleProtocolError(self.endpoint, "subprocess closed its stdout")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8", errors="replace")

    def decide(self, scenario: Scenario, format: Format = Format.SHORT) -> MetaDecision:
        if self._proc.poll() is not None:
            raise OracleProtocolError(
                self.endpoint, f"subprocess exited with code {self._proc.returncode}"
            )
        deadline = time.monotonic() + self.timeout
        try:
            self._proc.stdin.write(_encode_request(scenario, format))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise OracleProtocolError(self.endpoint, f"write failed: {e}") from None
        raw = self._read_line(deadline)
        return _parse_response(raw, scenario, format, self.endpoint)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        for stream in (self._proc.stdin, self._proc.stdout):
            if stream:
                stream.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class TcpOracle:
    """Oracle behind a TCP stream speaking the same line protocol."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = f"tcp:{host}:{port}"
        self.timeout = timeout
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise OracleError(f"cannot connect to {self.endpoint}: {e}") from None
        self._buffer = b""

    def _read_line(self, deadline: float) -> str:
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise OracleTimeout(self.endpoint, self.timeout)
            self._sock.settimeout(remaining)
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise OracleTimeout(self.endpoint, self.timeout) from None
            if not chunk:
                raise OracleProtocolError(self.endpoint, "connection closed")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8", errors="replace")

    def decide(self, scenario: Scenario, format: Format = Format.SHORT) -> MetaDecision:
        deadline = time.monotonic() + self.timeout
        try:
            self._sock.sendall(_encode_request(scenario, format))
        except OSError as e:
            raise OracleProtocolError(self.endpoint, f"send failed: {e}") from None
        raw = self._read_line(deadline)
        return _parse_response(raw, scenario, format, self.endpoint)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_oracle(endpoint: str, timeout: float = DEFAULT_TIMEOUT):
    """Build an oracle from an endpoint string.

    ``rule`` for the in-process rule oracle, ``exec:CMD`` for a
    subprocess, ``tcp:HOST:PORT`` for a TCP stream.
    """
    if endpoint == "rule":
        from .oracle import RuleOracle
        return RuleOracle()
    if endpoint.startswith("exec:"):
        return ExecOracle(endpoint[len("exec:"):], timeout=timeout)
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:"):]
        host, sep, port = rest.rpartition(":")
        if not sep or not host:
            raise ValueError(f"malformed tcp endpoint {endpoint!r}")
        try:
            port_num = int(port)
        except ValueError:
            raise ValueError(f"malformed tcp port in {endpoint!r}") from None
        return TcpOracle(host, port_num, timeout=timeout)
    raise ValueError(f"unknown oracle endpoint {endpoint!r}")
