"""Prediction from encodings and nearest-neighbor baselines on SPD data."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .divergence import abld_airm, jbld
from .errors import DimensionMismatch, InvalidInput
from .iddl import IddlModel, LabeledSpdDataset, encode, encode_batch
from .linalg import as_square, spd_log

NN1_METRICS = ("le", "airm", "jbld")


@dataclass
class PredictionReport:
    """Per-sample predictions plus the aggregate accuracy and confusion."""

    labels_true: np.ndarray
    labels_pred: np.ndarray
    accuracy: float
    confusion: np.ndarray
    scores: np.ndarray | None = None

    @classmethod
    def from_predictions(cls, labels_true, labels_pred, label_count: int,
                         scores=None) -> "PredictionReport":
        labels_true = np.asarray(labels_true, dtype=int)
        labels_pred = np.asarray(labels_pred, dtype=int)
        confusion = np.zeros((label_count, label_count), dtype=int)
        for t, p in zip(labels_true, labels_pred):
            confusion[t - 1, p - 1] += 1
        accuracy = float(np.trace(confusion)) / confusion.sum()
        return cls(labels_true, labels_pred, accuracy, confusion, scores)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "per_sample": [
                {"index": i, "true": int(t), "pred": int(p)}
                for i, (t, p) in enumerate(zip(self.labels_true, self.labels_pred))
            ],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as f:
                f.write(text + "\n")
        return text

    def to_csv(self, path, comment: str | None = None):
        with open(path, "w", newline="") as f:
            if comment:
                f.write(f"# {comment}\n")
            writer = csv.writer(f)
            writer.writerow(["index", "true_label", "pred_label"])
            for i, (t, p) in enumerate(zip(self.labels_true, self.labels_pred)):
                writer.writerow([i, int(t), int(p)])


def predict(model: IddlModel, x) -> int:
    """Class with the highest classifier score; ties go to the smallest label."""
    v = encode(x, model.atoms, model.params)
    return int(np.argmax(model.w @ v)) + 1


def predict_batch(model: IddlModel, samples) -> np.ndarray:
    scores = encode_batch(samples, model.atoms, model.params) @ model.w.T
    return np.argmax(scores, axis=1) + 1


def nn1(train: LabeledSpdDataset, x, metric: str) -> int:
    """Label of the nearest training sample under an SPD measure.

    Metrics: "le" is the log-Euclidean distance ||Log X - Log Y||_F, "airm"
    is the affine-invariant geodesic length sqrt(abld_airm), and "jbld" the
    Jensen-Bregman log-det divergence. Ties go to the smallest sample index.
    """
    return nn1_predictor(train, metric)(x)


def nn1_predictor(train: LabeledSpdDataset, metric: str):
    """Closure over precomputed train-side transforms; same answers as nn1."""
    metric = metric.lower()
    if metric not in NN1_METRICS:
        raise InvalidInput(f"metric must be one of {NN1_METRICS}")
    labels = train.labels

    if metric == "le":
        logs = np.stack([spd_log(s) for s in train.samples])

        def classify_le(x):
            lx = spd_log(as_square(x, "X"))
            d2 = np.square(logs - lx[None]).sum(axis=(1, 2))
            return int(labels[np.argmin(d2)])

        return classify_le

    if metric == "airm":
        samples = train.samples

        def classify_airm(x):
            x = as_square(x, "X")
            if x.shape != samples.shape[1:]:
                raise DimensionMismatch("query dimension differs from train")
            d2 = np.array([abld_airm(x, s) for s in samples])
            return int(labels[np.argmin(d2)])

        return classify_airm

    samples = train.samples

    def classify_jbld(x):
        x = as_square(x, "X")
        if x.shape != samples.shape[1:]:
            raise DimensionMismatch("query dimension differs from train")
        d = np.array([jbld(x, s) for s in samples])
        return int(labels[np.argmin(d)])

    return classify_jbld


def evaluate(predictor, test: LabeledSpdDataset, label_count: int | None = None
             ) -> PredictionReport:
    """Run a fitted model or any callable predictor over a test set."""
    if len(test) == 0:
        raise InvalidInput("test set is empty")
    if isinstance(predictor, IddlModel):
        scores = encode_batch(test.samples, predictor.atoms, predictor.params) \
            @ predictor.w.T
        preds = np.argmax(scores, axis=1) + 1
        big_l = predictor.label_count
    else:
        preds = np.array([int(predictor(x)) for x in test.samples])
        scores = None
        big_l = label_count or max(int(test.labels.max()), int(preds.max()))
    if test.labels.max() > big_l:
        raise InvalidInput(
            f"test labels reach {test.labels.max()} but predictor knows {big_l}"
        )
    return PredictionReport.from_predictions(test.labels, preds, big_l, scores)
