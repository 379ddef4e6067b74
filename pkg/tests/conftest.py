from pathlib import Path

import numpy as np
import pytest

from dexforge import load_hand
from dexforge.kinematics import apply_mimic

FIXTURES = Path(__file__).parent / "fixtures"
HANDS = FIXTURES / "hands"
RECORDINGS = FIXTURES / "recordings"

TWIG = HANDS / "twig.hand.json"
STICK = HANDS / "stick.hand.json"
INSPIRE = HANDS / "inspire_like.hand.json"
WUJI = HANDS / "wuji_like.hand.json"
DEMO_RECORDING = RECORDINGS / "twig_demo.recording.json"


@pytest.fixture(scope="session")
def twig():
    return load_hand(TWIG)


@pytest.fixture(scope="session")
def stick():
    return load_hand(STICK)


@pytest.fixture(scope="session")
def inspire():
    return load_hand(INSPIRE)


@pytest.fixture(scope="session")
def wuji():
    return load_hand(WUJI)


def random_valid_q(model, rng, margin=0.1):
    """Uniform draw from the (slightly shrunk) joint box, mimic-consistent."""
    kin = model.kin
    span = kin.upper - kin.lower
    q = rng.uniform(kin.lower + margin * span, kin.upper - margin * span)
    return apply_mimic(model, q).q


def assert_pose_close(a, b, tol=1e-9):
    assert np.allclose(a.rot, b.rot, atol=tol), f"rotations differ by {np.abs(a.rot - b.rot).max()}"
    assert np.allclose(a.trans, b.trans, atol=tol), f"translations differ by {np.abs(a.trans - b.trans).max()}"
