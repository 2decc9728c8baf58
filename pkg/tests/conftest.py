import numpy as np
import pytest

from helpers import build_image_dir, push_through_ops

from chromadapt import colorops

# Fixed adjustment used to derive the "real" side of the desk-scale fixture.
FIXTURE_ALPHA = colorops.AdjustParams(brightness=0.3, saturation=-0.2, contrast=0.25)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """12 fixture images at 32x32, no masks."""
    root = tmp_path_factory.mktemp("small") / "imgs"
    return build_image_dir(root, n=12, size=32, seed=7)


@pytest.fixture(scope="session")
def masked_dataset(tmp_path_factory):
    """10 image/mask pairs at 32x32."""
    root = tmp_path_factory.mktemp("masked") / "imgs"
    return build_image_dir(root, n=10, size=32, seed=11, masks=True)


@pytest.fixture(scope="session")
def desk_base(tmp_path_factory):
    """The desk-scale 'synthetic' side: 200 images at 64x64."""
    root = tmp_path_factory.mktemp("desk") / "base"
    return build_image_dir(root, n=200, size=64, seed=1234)


@pytest.fixture(scope="session")
def desk_real(desk_base, tmp_path_factory):
    """The desk-scale 'real' side: the base set pushed through fixed ops."""
    out = tmp_path_factory.mktemp("desk_real") / "real"
    return push_through_ops(desk_base, FIXTURE_ALPHA, out)
