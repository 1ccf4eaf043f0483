import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def real_images(tmp_path_factory):
    """Ten real photographs (scikit-image's bundled samples), saved as PNGs.

    Downscaled so the whole-session forward passes stay fast; sizes are chosen
    to not be multiples of 16 so padding is actually exercised.
    """
    from skimage import data

    sources = {
        "astronaut": data.astronaut(),
        "brick": data.brick(),
        "camera": data.camera(),
        "chelsea": data.chelsea(),
        "coffee": data.coffee(),
        "coins": data.coins(),
        "grass": data.grass(),
        "gravel": data.gravel(),
        "moon": data.moon(),
        "rocket": data.rocket(),
    }
    out = tmp_path_factory.mktemp("images")
    for name, array in sorted(sources.items()):
        if array.ndim == 2:
            array = np.stack([array] * 3, axis=-1)
        image = Image.fromarray(array.astype(np.uint8), "RGB")
        scale = 150 / max(image.size)
        new_size = (max(1, round(image.size[0] * scale)), max(1, round(image.size[1] * scale)))
        image.resize(new_size, Image.BILINEAR).save(out / f"{name}.png")
    return out
