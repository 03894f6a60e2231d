import os

REPORT_PATH = os.path.abspath(os.path.join(os.path.dirname(__file__),
                                           os.pardir, "acceptance_report.txt"))


def pytest_configure(config):
    # each run starts with a fresh acceptance report
    if os.path.exists(REPORT_PATH):
        os.remove(REPORT_PATH)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if os.path.exists(REPORT_PATH):
        terminalreporter.section("acceptance criteria")
        with open(REPORT_PATH, encoding="utf-8") as fh:
            for line in fh.read().splitlines():
                terminalreporter.write_line(line)
