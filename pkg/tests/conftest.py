def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, whatever the outcome."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if rep.when == "call" and "criterion" in props:
                lines.append((props["criterion"], outcome, props.get("title", ""),
                              props.get("detail", "")))
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, outcome, title, detail in sorted(lines):
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{tag} {num:2d} {title}: {detail}")
