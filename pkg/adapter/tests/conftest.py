import numpy as np
import pytest


@pytest.fixture(scope="session")
def image_set(tmp_path_factory):
    """20 public-domain face crops and non-face crops as a dataset tree.

    Uses the face-crop subset bundled with scikit-image (25x25 grayscale,
    first 100 entries are faces), upscaled to a workable size. The
    eigenspace baked into the builtin provider was fit on entries 20..99,
    so the 12 face images here (0..11) are out of its training set.
    """
    skimage_data = pytest.importorskip("skimage.data")
    import cv2

    faces = skimage_data.lfw_subset()
    root = tmp_path_factory.mktemp("images") / "set"
    chosen = [("face", i) for i in range(12)] + [("nonface", 100 + i) for i in range(8)]
    for kind, idx in chosen:
        subject = root / f"{kind}_{idx:03d}"
        subject.mkdir(parents=True)
        img = (faces[idx] * 255).astype(np.uint8)
        big = cv2.resize(img, (200, 200), interpolation=cv2.INTER_CUBIC)
        assert cv2.imwrite(str(subject / "img.png"), big)
    return root
