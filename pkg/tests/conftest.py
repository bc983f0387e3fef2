import numpy as np
import pytest

from dysarthric_dann.model import Batch, ModelConfig
from dysarthric_dann.nn import Conv1dSpec


def tiny_config(**overrides) -> ModelConfig:
    """Seven small conv layers over 64-sample inputs; fast enough for unit tests."""
    channels = [2, 2, 3, 3, 4, 4, 4]
    kernels = [5, 3, 3, 3, 2, 2, 2]
    strides = [2, 1, 1, 1, 1, 1, 1]
    specs, prev = [], 1
    for ch, k, s in zip(channels, kernels, strides):
        specs.append(Conv1dSpec(prev, ch, k, stride=s))
        prev = ch
    fields = {"input_length": 64, "conv_layers": tuple(specs), "hidden_dim": 6, **overrides}
    return ModelConfig(**fields)


@pytest.fixture
def tiny():
    return tiny_config()


def random_batch(rng: np.random.Generator, n: int, length: int = 64, labelled: bool = True) -> Batch:
    return Batch(rng.uniform(-1, 1, (n, length)), rng.integers(0, 10, n) if labelled else None)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
