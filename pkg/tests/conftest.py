import numpy as np
import pytest

from neuroqc.swc import NeuronReconstruction


def chain_text(coords, spacing_note=None):
    """SWC text for a single chain through the given (x, y, z) coords."""
    lines = []
    for i, (x, y, z) in enumerate(coords, start=1):
        parent = -1 if i == 1 else i - 1
        lines.append(f"{i} 3 {x} {y} {z} 1.0 {parent}")
    return "\n".join(lines) + "\n"


def random_tree(n, seed, neuron_id=0, label="", span=500.0):
    """Fast valid reconstruction: chain topology, random coordinates."""
    rng = np.random.default_rng(seed)
    ids = np.arange(1, n + 1, dtype=np.int64)
    parents = np.concatenate(([-1], ids[:-1]))
    return NeuronReconstruction(
        neuron_id,
        label,
        ids,
        np.full(n, 3, dtype=np.int64),
        rng.uniform(0.0, span, (n, 3)),
        np.ones(n),
        parents,
    )


@pytest.fixture
def make_chain():
    from neuroqc.swc import parse_swc

    def _make(coords, neuron_id=0, label=""):
        return parse_swc(chain_text(coords), neuron_id=neuron_id, label=label)

    return _make
