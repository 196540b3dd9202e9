import json

import numpy as np
import pytest

from seedpure.classifiers import (ALGORITHMS, TrainedClassifier, load_model, make_estimator,
                                  save_model, train_classifier)
from seedpure.errors import FormatError, LeakageError, ShapeError
from seedpure.features import FeatureMatrix

SMALL = {"rf": {"n_trees": 7}, "et": {"n_trees": 7}, "knn": {"k": 3}}


@pytest.fixture
def data(rng):
    X = np.vstack([rng.normal(0, 1, (30, 5)), rng.normal(1.2, 1, (30, 5))])
    y = np.repeat([0, 1], 30)
    return FeatureMatrix.build(X, y, role="train"), FeatureMatrix.build(rng.normal(0.6, 1.5, (40, 5)))


@pytest.mark.parametrize("algo", ALGORITHMS)
class TestEveryAlgorithm:
    def test_round_trip_same_predictions(self, algo, data, tmp_path):
        train, query = data
        model = train_classifier(algo, train, SMALL.get(algo), seed=3)
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert np.array_equal(back.predict(query), model.predict(query))
        assert back.dumps() == model.dumps()

    def test_deterministic(self, algo, data):
        train, query = data
        a = train_classifier(algo, train, SMALL.get(algo), seed=5)
        b = train_classifier(algo, train, SMALL.get(algo), seed=5)
        assert a.dumps() == b.dumps()
        assert np.array_equal(a.predict(query), b.predict(query))

    def test_empty_matrix(self, algo, data):
        model = train_classifier(algo, data[0], SMALL.get(algo))
        out = model.predict(FeatureMatrix.build(np.zeros((0, 5))))
        assert out.shape == (0,)

    def test_width_mismatch(self, algo, data):
        model = train_classifier(algo, data[0], SMALL.get(algo))
        with pytest.raises(ShapeError):
            model.predict(FeatureMatrix.build(np.zeros((2, 4))))

    def test_learns_something(self, algo, data):
        model = train_classifier(algo, data[0], SMALL.get(algo))
        assert np.mean(model.predict(data[0]) == data[0].labels) >= 0.8


class TestContract:
    def test_refuses_test_rows(self, data):
        with pytest.raises(LeakageError):
            train_classifier("lr", data[0].with_role("test"))

    def test_standardize_defaults(self, data):
        assert train_classifier("lr", data[0]).standardizer is not None
        assert train_classifier("dt", data[0]).standardizer is None
        assert train_classifier("dt", data[0], standardize=True).standardizer is not None

    def test_unknown_algorithm_and_params(self):
        with pytest.raises(ValueError):
            make_estimator("mlp")
        with pytest.raises(ValueError):
            make_estimator("knn", {"gamma": 1})

    def test_lambda_alias(self):
        assert make_estimator("lr", {"lambda": 0.5}).lam == 0.5

    def test_document_layout(self, data):
        doc = json.loads(train_classifier("lr", data[0]).dumps())
        assert doc["format"] == "seedpure-model" and doc["version"] == 1
        assert doc["parameters"]["w"]["dtype"] == "<f8"
        assert doc["parameters"]["w"]["shape"] == [5]

    def test_rejects_foreign_documents(self):
        with pytest.raises(FormatError):
            TrainedClassifier.loads("not json")
        with pytest.raises(FormatError):
            TrainedClassifier.loads(json.dumps({"format": "other"}))
        with pytest.raises(FormatError):
            TrainedClassifier.loads(json.dumps({"format": "seedpure-model", "version": 9}))
