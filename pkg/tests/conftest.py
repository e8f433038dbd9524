import math

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

# operating point: 1034 %/W, 330 mW, L = 38.6 %
A_OP = 10.34
P_OP = 0.330
L_OP = 0.386

# 50-digit mpmath evaluations of the closed-form expressions
R_PLUS_OP = 25.082656902318253662
R_MINUS_OP = 0.40126506204832167847
E_PLUS_OP = 40.222568244818002708
E_MINUS_OP = 0.024861664573813808583


@pytest.fixture
def op_levels():
    return R_MINUS_OP, R_PLUS_OP


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def db(x):
    return 10 * math.log10(x)


# acceptance criterion -> (title, status, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{status}] {n}. {title}" + (f" -- {detail}" if detail else ""))
