import contextlib

import pytest

_ACCEPTANCE: dict[str, tuple[str, str, str]] = {}


@pytest.fixture
def criterion():
    """Context manager that records a PASS/FAIL line for an acceptance criterion."""

    @contextlib.contextmanager
    def record(key: str, title: str):
        detail = {"text": ""}
        try:
            yield detail
        except BaseException:
            _ACCEPTANCE[key] = ("FAIL", title, detail["text"])
            print(f"criterion {key}: FAIL  {title}  {detail['text']}")
            raise
        _ACCEPTANCE[key] = ("PASS", title, detail["text"])
        print(f"criterion {key}: PASS  {title}  {detail['text']}")

    return record


def _order(key: str):
    n = len(key) - len(key.lstrip("0123456789"))
    return (int(key[:n]) if n else 0, key)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=_order):
        status, title, text = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{status}  criterion {key:<4} {title}  {text}".rstrip())
