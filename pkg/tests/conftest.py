import json
from pathlib import Path

import numpy as np
import pytest

from facemood.tensorio import BUNDLE_TOPOLOGY, Tensor, WeightBundle

FIXTURES = Path(__file__).parent / "fixtures"
FACES_DIR = FIXTURES / "faces"


def make_bundle(seed: int = 0, scale: float = 0.01) -> WeightBundle:
    """Topology-valid bundle with small random weights (seeded)."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, dims in BUNDLE_TOPOLOGY.items():
        if name == "mean":
            data = np.full(dims, 110.0, dtype=np.float32)
        elif name.endswith(".bias"):
            data = np.zeros(dims, dtype=np.float32)
        else:
            data = (rng.standard_normal(dims) * scale).astype(np.float32)
        tensors[name] = Tensor(name, data)
    return WeightBundle(tensors)


@pytest.fixture(scope="session")
def bundle() -> WeightBundle:
    return make_bundle()


@pytest.fixture(scope="session")
def bundle_file(tmp_path_factory, bundle):
    from facemood.tensorio import save_bundle

    path = tmp_path_factory.mktemp("weights") / "weights.ntc"
    save_bundle(bundle, path)
    return path


@pytest.fixture(scope="session")
def cascade():
    from facemood.cli import bundled_cascade_path
    from facemood.facedetect import parse_cascade

    return parse_cascade(bundled_cascade_path())


@pytest.fixture(scope="session")
def annotations() -> dict[str, list[int]]:
    return json.loads((FACES_DIR / "annotations.json").read_text())


@pytest.fixture(scope="session")
def fixture_model(bundle, annotations):
    """Tiny multiclass model trained so the bundled big-frame face classifies
    as happiness and six corpus faces cover the other emotions."""
    from facemood.convnet import LayerTap, extract_features
    from facemood.image import crop, grayscale, load_image
    from facemood.svm import SvmConfig, TrainingSet, predict, train_multiclass

    rows, labels = [], []
    sources = [("face_00.png", 0), ("face_01.png", 1), ("face_02.png", 2),
               ("face_03.png", 3), ("face_04.png", 5), ("face_05.png", 6)]
    for name, label in sources:
        x, y, side = annotations[name]
        img = crop(grayscale(load_image(FACES_DIR / name)), x, y, side, side)
        rows.append(extract_features(img, bundle, LayerTap.LAYER5).values)
        labels.append(label)
    big = grayscale(load_image(FACES_DIR / "bigface_640x480.png"))
    big_crop = crop(big, 180, 110, 240, 240)
    rows.append(extract_features(big_crop, bundle, LayerTap.LAYER5).values)
    labels.append(4)  # happiness

    model = train_multiclass(
        TrainingSet(np.array(rows), np.array(labels)), SvmConfig(c=10.0)
    )
    assert predict(model, rows[-1])[0] == 4, "fixture model must map the big face to happiness"
    return model


@pytest.fixture(scope="session")
def model_file(tmp_path_factory, fixture_model):
    from facemood.svm import save_model

    path = tmp_path_factory.mktemp("model") / "model.ntc"
    save_model(fixture_model, path)
    return path
