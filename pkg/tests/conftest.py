"""Shared fixtures and helpers for the test suite."""

import pytest

from simt_forge.device_memory import MemConfig


# acceptance results collected by tests/test_acceptance.py; printed in the
# terminal summary so each criterion shows one pass/fail line
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def small_mem_config():
    # small spaces keep full-shadow recomputation cheap in property tests
    return MemConfig(global_size=16384, shared_size=4096, local_size=4096,
                     granule=4, redzone=8, quarantine_global=256)


AXPY_TEXT = """\
kernel axpy(a:f32, x:ptr.global, y:ptr.global, n:i32) regs=8
  sreg %r1, tid
  mul %r2, %r1, 4
  mov %a2, %a0
  add %a2, %a2, %r2
  ld.global.f32 %f1, [%a2]
  mov %a3, %a1
  add %a3, %a3, %r2
  ld.global.f32 %f2, [%a3]
  fmul %f1, %f0, %f1
  fadd %f2, %f2, %f1
  st.global.f32 [%a3], %f2
  exit
"""


@pytest.fixture
def axpy_text():
    return AXPY_TEXT
