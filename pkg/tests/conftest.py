import os

# single-threaded BLAS: deterministic sums and honest timings
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fragxsite.chemio import PDBAtom, ProteinStructure

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_graph(rng, n, p=0.3, dim=74):
    """(features, edges) of an Erdos-Renyi graph."""
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return rng.random((n, dim)), np.array(edges, dtype=np.int64).reshape(-1, 2)


def hollow_shell(size=20.0, wall=2.0, hole=6.0, step=1.0, origin=(0.0, 0.0, 0.0)):
    """Thick-walled cube with a square hole in the +z wall."""
    ticks = np.arange(0.0, size + 1e-9, step)
    c = size / 2.0
    atoms = []
    for x in ticks:
        for y in ticks:
            for z in ticks:
                p = np.array([x, y, z])
                if not ((p <= wall).any() or (p >= size - wall).any()):
                    continue
                if z >= size - wall and abs(x - c) < hole / 2 and abs(y - c) < hole / 2:
                    continue
                xyz = tuple(float(v) for v in np.asarray(origin) + p)
                atoms.append(PDBAtom("CA", "C", "GLY", len(atoms) % 9999 + 1, "A", xyz))
    return ProteinStructure(atoms, "shell")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def shell():
    return hollow_shell()


def toy_sample(rng, n_frag=3, n_pock=2, label=0, drug_id="d", protein_id="p"):
    """InteractionSample with random small graphs."""
    from fragxsite.featurize import GraphSample
    from fragxsite.model import InteractionSample

    def graph():
        return GraphSample(*random_graph(rng, int(rng.integers(1, 6)), 0.5, 74))

    return InteractionSample([graph() for _ in range(n_frag)], [graph() for _ in range(n_pock)],
                             label, drug_id, protein_id)


def tiny_config(**kw):
    from fragxsite.model import ModelConfig
    base = dict(hidden=8, dim=8, heads=2, latents=4, max_fragments=8, max_pockets=4, dropout=0.0)
    base.update(kw)
    return ModelConfig(**base)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the acceptance summary."""
    def _report(criterion, ok, detail):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"{status} criterion {criterion}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
