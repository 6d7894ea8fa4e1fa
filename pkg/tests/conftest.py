import pytest

from lossy_cavity.optical_stack import ConstantPermittivity as C
from lossy_cavity.optical_stack import LayerStack


@pytest.fixture
def metal_lossless():
    return LayerStack(1.0, 0.2, C(1.0), C(-100.0), C(1.0))


@pytest.fixture
def metal_absorbing():
    return LayerStack(1.0, 0.2, C(1.0), C(-100.0, 4e-4), C(1.0))


@pytest.fixture
def dielectric_absorbing():
    return LayerStack(1.0, 0.05, C(1.5, 0.01), C(4.0, 0.2), C(1.0))


_CRITERIA = {
    1: "Fresnel and transfer-matrix identities",
    2: "Green function reciprocity, Helmholtz and absorption",
    3: "resonance roots and leading-order linewidth",
    4: "rate identity across mirror thickness",
    5: "sum rule",
    6: "asymptotic eta from two routes",
    7: "input suppression by an absorbing mirror",
    8: "Gaussian channel on the grid",
    9: "single-photon negativity threshold",
    10: "outside reflection modulus",
}


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            if key == "passed" and rep.when != "call":
                continue
            num = int(nodeid.split("test_criterion_")[1][:2])
            outcomes.setdefault(num, set()).add(key)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        if num not in outcomes:
            continue
        status = "PASS" if outcomes[num] == {"passed"} else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {_CRITERIA[num]}")
