"""Task evaluators and model clients.

Correctness is a pure function of the model response and ground truth
derived from the render itself (the segmentation mask supplies detection
boxes exactly, by construction). Model failures raise ModelClientError and
the configuration lands in the errored bucket: flaky model servers must not
bias accuracy denominators.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .assets import encode_png
from .errors import EvaluationError, ModelClientError, NotApplicableError
from .render import RenderOutput

DEFAULT_IOU_THRESHOLD = 0.5


@dataclass
class PredictionResult:
    task: str  # "classification" | "detection" | custom evaluator name
    is_correct: bool
    latency: float = 0.0
    top1: int | None = None
    top1_label: str | None = None
    top1_score: float | None = None
    scores: list | None = None
    detections: list | None = None
    metrics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """The compact form that goes into the log record."""
        out = {"task": self.task, "top1": self.top1, "top1_label": self.top1_label}
        if self.top1_score is not None:
            out["top1_score"] = self.top1_score
        if self.detections is not None:
            out["detections"] = self.detections
        if self.metrics:
            out["metrics"] = self.metrics
        return out


def argmax_lowest(scores: np.ndarray) -> int:
    # exact ties break toward the lowest class id
    return int(np.argmax(scores))


def evaluate_classification(output: RenderOutput, client, label_set) -> PredictionResult:
    """Top-1 correctness: the argmax class (ties to the lowest id) must be in
    the mesh's accepted label set."""
    start = time.perf_counter()
    response = client.infer(output.rgb)
    latency = time.perf_counter() - start
    scores = np.asarray(response.get("scores", ()), dtype=np.float64)
    vocabulary = client.vocabulary
    if scores.ndim != 1 or len(scores) != len(vocabulary):
        raise ModelClientError(
            f"scores length {scores.size} != vocabulary size {len(vocabulary)}"
        )
    if not np.isfinite(scores).all():
        raise ModelClientError("non-finite score in model response")
    top1 = argmax_lowest(scores)
    label = vocabulary[top1]
    return PredictionResult(
        task="classification",
        is_correct=label in label_set,
        latency=latency,
        top1=top1,
        top1_label=label,
        top1_score=float(scores[top1]),
    )


def box_iou(a, b) -> float:
    """Intersection over union of two normalized (l, t, r, b) boxes."""
    il, it = max(a[0], b[0]), max(a[1], b[1])
    ir, ib = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0.0, ir - il) * max(0.0, ib - it)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def mask_bbox(segmentation: np.ndarray):
    """Tight normalized (l, t, r, b) bounding box of a boolean mask, or None
    when the mask is empty. Edges sit on pixel boundaries."""
    ys, xs = np.nonzero(segmentation)
    if len(xs) == 0:
        return None
    h, w = segmentation.shape
    return (xs.min() / w, ys.min() / h, (xs.max() + 1) / w, (ys.max() + 1) / h)


def _validate_box(box):
    l, t, r, b = (float(c) for c in box)
    if not (0.0 <= l < r <= 1.0 and 0.0 <= t < b <= 1.0):
        raise ModelClientError(f"detection box {box} outside [0,1] or inverted")
    return (l, t, r, b)


def evaluate_detection(output: RenderOutput, client, label_set,
                       iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> PredictionResult:
    """Correct iff some predicted box overlaps the mask-derived ground truth
    with IoU >= threshold and carries an accepted class. Box order is
    irrelevant. Scenes where the object is absent are not-applicable."""
    gt_box = mask_bbox(output.segmentation)
    if gt_box is None:
        raise NotApplicableError("object absent from frame: no ground-truth box")
    start = time.perf_counter()
    response = client.infer(output.rgb)
    latency = time.perf_counter() - start
    raw = response.get("detections")
    if raw is None:
        raise ModelClientError("detection response missing 'detections'")
    vocabulary = client.vocabulary
    detections, correct = [], False
    best_iou = 0.0
    for det in raw:
        box = _validate_box(det["box"])
        class_id = int(det["class_id"])
        if not 0 <= class_id < len(vocabulary):
            raise ModelClientError(f"detection class id {class_id} out of range")
        iou = box_iou(box, gt_box)
        best_iou = max(best_iou, iou)
        hit = iou >= iou_threshold and vocabulary[class_id] in label_set
        correct = correct or hit
        detections.append({
            "box": list(box), "class_id": class_id,
            "label": vocabulary[class_id], "score": float(det.get("score", 0.0)),
            "iou": iou,
        })
    return PredictionResult(
        task="detection",
        is_correct=correct,
        latency=latency,
        detections=detections,
        metrics={"gt_box": list(gt_box), "best_iou": best_iou},
    )


# ---------------------------------------------------------------------------
# custom evaluator extension point

_evaluators = {}


def register_evaluator(name: str, fn) -> None:
    """fn(render_output, model_response) -> (is_correct, metrics dict with
    stable string keys)."""
    if name in _evaluators:
        raise EvaluationError(f"evaluator {name!r} already registered")
    _evaluators[name] = fn


def get_evaluator(name: str):
    try:
        return _evaluators[name]
    except KeyError:
        raise EvaluationError(f"unknown evaluator {name!r}") from None


def evaluate_custom(name: str, output: RenderOutput, client) -> PredictionResult:
    start = time.perf_counter()
    response = client.infer(output.rgb)
    latency = time.perf_counter() - start
    is_correct, metrics = get_evaluator(name)(output, response)
    for key in metrics:
        if not isinstance(key, str):
            raise EvaluationError(f"metric name {key!r} is not a string")
    return PredictionResult(task=name, is_correct=bool(is_correct),
                            latency=latency, metrics=dict(metrics))


def segmentation_iou_evaluator(output: RenderOutput, response,
                               threshold: float = 0.5):
    """Reference custom evaluator: IoU of a predicted mask against the
    render's own segmentation buffer."""
    predicted = np.asarray(response["mask"], dtype=bool)
    if predicted.shape != output.segmentation.shape:
        raise EvaluationError("predicted mask resolution mismatch")
    inter = np.logical_and(predicted, output.segmentation).sum()
    union = np.logical_or(predicted, output.segmentation).sum()
    iou = float(inter / union) if union else 1.0
    return iou >= threshold, {"iou": iou}


register_evaluator("segmentation_iou", segmentation_iou_evaluator)


# ---------------------------------------------------------------------------
# model clients


class ToyCentroidModel:
    """Mean-RGB nearest-centroid classifier over configured class colors.
    Deterministic, dependency-free; scores are negated distances so argmax
    picks the nearest centroid."""

    def __init__(self, classes):
        # classes: sequence of (name, (r, g, b))
        self.vocabulary = [name for name, _ in classes]
        self._centroids = np.asarray([color for _, color in classes],
                                     dtype=np.float64)

    def infer(self, image: np.ndarray) -> dict:
        mean = np.asarray(image, dtype=np.float64).reshape(-1, 3).mean(axis=0)
        distances = np.linalg.norm(self._centroids - mean, axis=1)
        return {"scores": (-distances).tolist()}


class HttpModelClient:
    """POSTs the render as PNG bytes; expects JSON {"scores": [...]} or
    {"detections": [...]} back. Timeouts and schema violations surface as
    ModelClientError so the orchestrator can retry or error the item."""

    def __init__(self, url: str, vocabulary, timeout: float = 10.0):
        self.url = url
        self.vocabulary = list(vocabulary)
        self.timeout = timeout

    def infer(self, image: np.ndarray) -> dict:
        png = encode_png(image)
        try:
            response = requests.post(
                self.url, data=png, timeout=self.timeout,
                headers={"Content-Type": "image/png"},
            )
            response.raise_for_status()
            body = response.json()
        except requests.RequestException as exc:
            raise ModelClientError(f"model endpoint failed: {exc}") from exc
        except ValueError as exc:
            raise ModelClientError(f"model endpoint returned non-JSON: {exc}") from exc
        if not isinstance(body, dict) or not ({"scores", "detections"} & set(body)):
            raise ModelClientError(
                "model response must carry 'scores' or 'detections'"
            )
        return body


class CachingModelClient:
    """Per-run response cache keyed by configuration id; concurrent infer
    calls on distinct ids proceed independently."""

    def __init__(self, client):
        self._client = client
        self._cache: dict[int, dict] = {}
        self._lock = threading.Lock()

    @property
    def vocabulary(self):
        return self._client.vocabulary

    def infer(self, image: np.ndarray, configuration_id=None) -> dict:
        if configuration_id is None:
            return self._client.infer(image)
        with self._lock:
            if configuration_id in self._cache:
                return self._cache[configuration_id]
        response = self._client.infer(image)
        with self._lock:
            self._cache.setdefault(configuration_id, response)
        return response


class _BoundClient:
    """View of a caching client pinned to one configuration id, so the
    evaluator API stays a plain infer(image)."""

    def __init__(self, caching_client: CachingModelClient, configuration_id):
        self._caching = caching_client
        self._id = configuration_id

    @property
    def vocabulary(self):
        return self._caching.vocabulary

    def infer(self, image: np.ndarray) -> dict:
        return self._caching.infer(image, self._id)


def bind_configuration(client, configuration_id):
    if isinstance(client, CachingModelClient):
        return _BoundClient(client, configuration_id)
    return client
