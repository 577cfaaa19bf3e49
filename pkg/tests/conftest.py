import numpy as np
import pytest

from trustxai.data import LabeledDataset, train_test_split
from trustxai.explainer import build_core
from trustxai.modesearch import SearchZone
from trustxai.primary_model import fit_reference
from trustxai.synth import generate_synthetic, separable_spec


@pytest.fixture(scope="session")
def separable():
    """Separable suite split 80:20, the reference classifier and its train-set core."""
    ld = generate_synthetic(separable_spec(5000), seed=3)
    train, test = train_test_split(ld, 0.8, seed=1)
    model = fit_reference(train)
    predicted = LabeledDataset(train.data, model.predict(train.data), 2)
    core = build_core(predicted, 2, zone=SearchZone.square(2, hi=10), seed=0)
    return {"train": train, "test": test, "model": model, "predicted": predicted, "core": core}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
