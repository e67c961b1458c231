import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_configure(config):
    config._gate_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config._gate_lines:
        terminalreporter.section("acceptance gates")
        for line in config._gate_lines:
            terminalreporter.write_line(line)
