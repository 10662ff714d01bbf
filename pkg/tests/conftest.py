import numpy as np
import pytest

from nsdil import _accel

BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run a test once per correlation backend."""
    before = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(before)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def conv_full_loops(a, b):
    """Textbook double loop over both operands."""
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for m in range(a.shape[0]):
        for n in range(a.shape[1]):
            for p in range(b.shape[0]):
                for q in range(b.shape[1]):
                    out[m + p, n + q] += a[m, n] * b[p, q]
    return out


def dft_direct(g, rows, cols):
    out = np.zeros((rows, cols), dtype=complex)
    m = np.arange(g.shape[0])[:, None]
    n = np.arange(g.shape[1])[None, :]
    for p in range(rows):
        for q in range(cols):
            out[p, q] = np.sum(g * np.exp(-2j * np.pi * (p * m / rows + q * n / cols)))
    return out


@pytest.fixture(scope="session")
def trained():
    """The default configuration trained once per session on the default gallery."""
    from nsdil import gallery, lcnn, objective

    rkg = gallery.generate_rkg(seed=0)
    model = lcnn.init_model(np.random.default_rng(0))
    model, history = objective.train(model, rkg, objective.TrainConfig(seed=0))
    return model, history


def sharp_crops(n=12, size=128):
    """Deterministic grey centre crops from the images bundled with scikit-image."""
    from skimage import color, data

    names = ["camera", "astronaut", "coffee", "chelsea", "brick", "grass", "gravel",
             "moon", "rocket", "clock", "coins", "immunohistochemistry", "text", "page"]
    out = []
    for name in names[:n]:
        img = np.asarray(getattr(data, name)(), dtype=np.float64)
        if img.ndim == 3:
            img = color.rgb2gray(img[..., :3] / 255.0)
        else:
            img = img / 255.0
        r0, c0 = (img.shape[0] - size) // 2, (img.shape[1] - size) // 2
        out.append((name, img[r0:r0 + size, c0:c0 + size].copy()))
    return out
