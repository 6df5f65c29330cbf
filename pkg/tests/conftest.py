from __future__ import annotations

_criteria: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _criteria[str(props["criterion"])] = ("PASS" if report.passed else "FAIL", str(props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: (int(k.split(".")[0]), k)):
        status, detail = _criteria[key]
        terminalreporter.write_line(f"criterion {key}: {status}  {detail}")
