import pytest

TINY = """
[material]
kind = isotropic
density = 1000
lambda = 2e9
mu = 1e9

[grid]
spacing = 2.5e-4
physical_half_width = 2e-3

[pml]
cells = 4
order = 2
reflection_target = 1e-3

[source]
kind = dirichlet_shell
f0 = 1e6
t0 = 1e-6
radius = 1e-3
amplitude = 1e-9

[time]
t_end = 1e-6

[output]
energy_every = 4
snapshot_every = 10

[run]
mode = elastic
"""


@pytest.fixture
def tiny_text():
    return TINY


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("."))):
            terminalreporter.write_line(line)
