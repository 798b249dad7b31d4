import pytest

from erasure_qec.layout import build_layout, syndrome_circuit


@pytest.fixture(scope="session")
def layout3():
    return build_layout(3)


@pytest.fixture(scope="session")
def circuit3(layout3):
    return syndrome_circuit(layout3, 3)


@pytest.fixture(scope="session")
def circuit5():
    return syndrome_circuit(build_layout(5), 5)


@pytest.fixture(scope="session")
def tuned_gate_params():
    """Gate example with the pulse length tuned to a pi/4 swap angle."""
    import dataclasses

    from erasure_qec.gate import tune_gate_time
    from erasure_qec.physics import DeviceParams

    params = DeviceParams.gate_example()
    return dataclasses.replace(params, t_g=tune_gate_time(params))


@pytest.fixture(scope="session")
def tuned_gate(tuned_gate_params):
    from erasure_qec.gate import sqrt_iswap_sim

    return sqrt_iswap_sim(tuned_gate_params)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
