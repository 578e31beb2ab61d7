import socket

import pytest


class NetworkAttempt(RuntimeError):
    pass


def _refuse(*args, **kwargs):
    raise NetworkAttempt(f"network access attempted during tests: {args!r}")


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Any outbound connection or DNS lookup fails the test that makes it."""
    monkeypatch.setattr(socket.socket, "connect", _refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", _refuse)
    monkeypatch.setattr(socket, "create_connection", _refuse)
    monkeypatch.setattr(socket, "getaddrinfo", _refuse)
    for var in ("PREFARRANGE_ORACLE_URL", "PREFARRANGE_ORACLE_KEY", "PREFARRANGE_ORACLE_MODEL"):
        monkeypatch.delenv(var, raising=False)
    yield


# filled by test_acceptance; echoed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
