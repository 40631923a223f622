import dataclasses

import numpy as np
import pytest

from memefusion.config import TEST_MODEL, ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_model_cfg(vocab_size: int = 20, image_size: int = 32, max_len: int = 128, dropout: float = 0.0) -> ModelConfig:
    """Test preset widths (D=32, L=2, A=2) on a 32x32 image so N=4."""
    return ModelConfig(
        dataclasses.replace(TEST_MODEL.vit, image_size=image_size, dropout=dropout),
        dataclasses.replace(TEST_MODEL.text, vocab_size=vocab_size, max_len=max_len, dropout=dropout),
        dataclasses.replace(TEST_MODEL.fusion, dropout=dropout),
    )


@pytest.fixture
def small_cfg():
    return small_model_cfg()


# (criterion, status, detail) rows filled in by test_acceptance.py
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status:<4}  {name}" + (f"  ({detail})" if detail else ""))
