import numpy as np
import pytest

from patchensemble import kernels


def natural_image(height=128, width=128, seed=0):
    """Smooth gradients, a few edges and mild noise: enough structure for codec tests."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    r = 120 + 80 * np.sin(xx / 17.0) * np.cos(yy / 23.0)
    g = 60 + 150 * (xx + yy) / (width + height)
    b = 200 - 120 * ((xx - width / 2) ** 2 + (yy - height / 2) ** 2) / (width * height / 2)
    img = np.stack([r, g, b], axis=-1)
    img[height // 3: height // 2, width // 4: width // 2] += 60
    img += rng.normal(0, 6, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


@pytest.fixture
def nat_image():
    return natural_image()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(kernels.available_backends()))
def kernel_impl(request):
    return kernels.available_backends()[request.param]
