import numpy as np
import pytest

from uvwadvect.mesh import MeshFrame

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(n, ok, detail)."""
    def record(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_RESULTS[n] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")


@pytest.fixture
def unit_triangle():
    return MeshFrame([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])


def random_frame(rng, n_vertices=60, n_triangles=100, uvws=True):
    pos = rng.normal(size=(n_vertices, 3))
    vel = rng.normal(size=(n_vertices, 3)) * 0.1
    tri = rng.integers(0, n_vertices, size=(n_triangles, 3))
    uvw = rng.normal(size=(n_vertices, 3)) if uvws else None
    return MeshFrame(pos, tri, vel, uvw)
