_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "tests": 0, "notes": []})
    if call.when == "call":
        entry["tests"] += 1
    if call.excinfo is not None:
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: {call.excinfo.typename}")
    for name, value in item.user_properties:
        if name == "detail":
            entry["notes"].append(str(value))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["ok"] and e["tests"] else "FAIL"
        detail = "; ".join(dict.fromkeys(e["notes"]))
        line = f"criterion {number}: {status} - {e['title']} ({e['tests']} tests)"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
