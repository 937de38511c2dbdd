"""Independent reference implementations used to cross-check the library.

The reference computations are deliberately naive pure Python over tuples
and lists: no numpy, no shared code with the package under test.  The WBF
reference follows the published algorithm step by step and recomputes
every fused box from scratch; the NMS reference is the O(n^2) textbook
loop; the evaluator recomputes every IoU for every threshold.  Only the
instance generators take a numpy Generator, for seeding convenience.
"""

from __future__ import annotations

# ---------------------------------------------------------------------------
# plain-Python building blocks


def ref_iou(a, b):
    """IoU of two corner tuples (mins..., maxs...); 0.0 on degenerate union."""
    k = len(a) // 2
    inter = 1.0
    for ax in range(k):
        side = min(a[ax + k], b[ax + k]) - max(a[ax], b[ax])
        if side <= 0.0:
            inter = 0.0
            break
        inter *= side
    vol_a = 1.0
    vol_b = 1.0
    for ax in range(k):
        vol_a *= max(0.0, a[ax + k] - a[ax])
        vol_b *= max(0.0, b[ax + k] - b[ax])
    union = vol_a + vol_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


class RefBox:
    """One input box: corner tuple, label, raw score, source (model, position)."""

    __slots__ = ("corners", "label", "score", "model", "pos", "eff")

    def __init__(self, corners, label, score, model, pos, eff):
        self.corners = corners
        self.label = label
        self.score = score
        self.model = model
        self.pos = pos
        self.eff = eff


def _flatten_ref(boxes_per_model, weights):
    flat = []
    for model, model_boxes in enumerate(boxes_per_model):
        for pos, (corners, label, score) in enumerate(model_boxes):
            flat.append(
                RefBox(tuple(corners), label, score, model, pos, score * weights[model])
            )
    return flat


def _fused_corners(cluster, score_power):
    k2 = len(cluster[0].corners)
    weights = [b.eff**score_power for b in cluster]
    total = 0.0
    for w in weights:
        total += w
    coords = []
    for axis in range(k2):
        acc = 0.0
        for b, w in zip(cluster, weights):
            acc += w * b.corners[axis]
        if total > 0.0:
            coords.append(acc / total)
        else:
            acc = 0.0
            for b in cluster:
                acc += b.corners[axis]
            coords.append(acc / len(cluster))
    return tuple(coords)


def wbf_reference(boxes_per_model, weights, iou_threshold, *, skip_threshold=0.0,
                  rescale_variant="clamped", score_power=1.0):
    """Step-by-step weighted boxes fusion over plain tuples.

    ``boxes_per_model``: per model, a list of (corner tuple, label, score).
    Returns a list of cluster dicts sorted like the library output:
    ``members`` are (model, pos) pairs in join order, ``corners`` and
    ``score`` describe the final fused box.
    """
    flat = _flatten_ref(boxes_per_model, weights)
    weight_total = 0.0
    for w in weights:
        weight_total += w
    results = []
    for label in sorted({b.label for b in flat}):
        # single list B, sorted by decreasing confidence
        b_list = [b for b in flat if b.label == label and b.eff >= skip_threshold]
        b_list.sort(key=lambda b: (-b.eff, b.model, b.pos))
        clusters = []  # the L list
        fused = []  # the F list (corner tuples)
        for box in b_list:
            best = -1.0
            best_index = -1
            for index, f in enumerate(fused):
                value = ref_iou(box.corners, f)
                if value > best:
                    best = value
                    best_index = index
            if best_index >= 0 and best > iou_threshold:
                clusters[best_index].append(box)
                fused[best_index] = _fused_corners(clusters[best_index], score_power)
            else:
                clusters.append([box])
                fused.append(box.corners)
        for cluster, corners in zip(clusters, fused):
            total = 0.0
            for b in cluster:
                total += b.eff
            mean = total / len(cluster)
            t = len(cluster)
            if rescale_variant == "clamped":
                score = mean * min(t, weight_total) / weight_total
            else:
                score = mean * t / weight_total
            score = min(max(score, 0.0), 1.0)
            results.append(
                {
                    "label": label,
                    "members": [(b.model, b.pos) for b in cluster],
                    "corners": corners,
                    "score": score,
                }
            )
    results.sort(key=lambda r: -r["score"])
    return results


def nms_reference(boxes_per_model, weights, iou_threshold):
    """Naive O(n^2) greedy suppression; returns (model, pos, score) kept boxes."""
    flat = _flatten_ref(boxes_per_model, weights)
    picked = []
    for label in sorted({b.label for b in flat}):
        group = [b for b in flat if b.label == label]
        group.sort(key=lambda b: (-b.eff, b.model, b.pos))
        kept = []
        for box in group:
            suppressed = False
            for other in kept:
                if ref_iou(box.corners, other.corners) > iou_threshold:
                    suppressed = True
                    break
            if not suppressed:
                kept.append(box)
        picked.extend(kept)
    picked.sort(key=lambda b: -b.eff)
    return [(b.model, b.pos, min(max(b.eff, 0.0), 1.0)) for b in picked]


def map_reference(predictions, ground_truth, thresholds):
    """Brute-force mAP: predictions {image: [(corners, label, score)]},
    ground_truth [(corners, label, image)]."""
    labels_with_gt = sorted({label for _c, label, _img in ground_truth})
    all_labels = sorted(
        set(labels_with_gt)
        | {label for boxes in predictions.values() for _c, label, _s in boxes}
    )
    aps = {}
    for label in all_labels:
        per_t = []
        for t in thresholds:
            tp = fp = fn = 0
            images = sorted(
                {img for _c, lab, img in ground_truth if lab == label}
                | {img for img, boxes in predictions.items()
                   if any(lab == label for _c, lab, _s in boxes)}
            )
            for image in images:
                preds = [
                    (c, s) for c, lab, s in predictions.get(image, []) if lab == label
                ]
                preds.sort(key=lambda p: -p[1])
                gts = [c for c, lab, img in ground_truth if lab == label and img == image]
                taken = [False] * len(gts)
                for corners, _score in preds:
                    best = -1.0
                    best_index = -1
                    for j, g in enumerate(gts):
                        if taken[j]:
                            continue
                        value = ref_iou(corners, g)
                        if value > best:
                            best = value
                            best_index = j
                    if best_index >= 0 and best > t:
                        taken[best_index] = True
                        tp += 1
                    else:
                        fp += 1
                fn += sum(1 for flag in taken if not flag)
            denom = tp + fp + fn
            per_t.append(tp / denom if denom else 0.0)
        aps[label] = sum(per_t) / len(per_t)
    if not labels_with_gt:
        return 0.0, aps
    return sum(aps[label] for label in labels_with_gt) / len(labels_with_gt), aps


# ---------------------------------------------------------------------------
# random instance generation shared by oracle and invariance suites


def random_box(rng, dim, anchors):
    """One valid normalized box, biased toward a shared anchor location."""
    k = dim
    if anchors and rng.random() < 0.6:
        center, half = anchors[int(rng.integers(0, len(anchors)))]
        lo = []
        hi = []
        for ax in range(k):
            c = center[ax] + float(rng.normal(0.0, 0.05))
            h = half[ax] * float(rng.uniform(0.7, 1.3))
            a = min(max(c - h, 0.0), 1.0)
            b = min(max(c + h, 0.0), 1.0)
            lo.append(min(a, b))
            hi.append(max(a, b))
    else:
        lo = []
        hi = []
        for _ax in range(k):
            a = float(rng.uniform(0.0, 0.95))
            b = a + float(rng.uniform(0.01, 1.0 - a))
            lo.append(a)
            hi.append(min(b, 1.0))
    return tuple(lo) + tuple(hi)


def random_instance(rng, dim=2, max_models=4, max_boxes=20, max_labels=3):
    """A random prediction set as plain data: (boxes_per_model, weights)."""
    n_models = int(rng.integers(1, max_models + 1))
    if rng.random() < 0.5:
        weights = [1.0] * n_models
    else:
        weights = [float(rng.uniform(0.5, 4.0)) for _ in range(n_models)]
    n_labels = int(rng.integers(1, max_labels + 1))
    anchors = []
    for _ in range(int(rng.integers(1, 4))):
        center = [float(rng.uniform(0.2, 0.8)) for _ in range(dim)]
        half = [float(rng.uniform(0.05, 0.25)) for _ in range(dim)]
        anchors.append((center, half))
    total = int(rng.integers(0, max_boxes + 1))
    counts = [0] * n_models
    for _ in range(total):
        counts[int(rng.integers(0, n_models))] += 1
    boxes_per_model = []
    for m in range(n_models):
        boxes = []
        for _ in range(counts[m]):
            boxes.append(
                (
                    random_box(rng, dim, anchors),
                    int(rng.integers(0, n_labels)),
                    float(rng.uniform(0.01, 1.0)),
                )
            )
        boxes_per_model.append(boxes)
    return boxes_per_model, weights


def random_params(rng):
    """Random WBF parameter draw matching the library's FusionParams ranges."""
    return {
        "iou_threshold": float(rng.uniform(0.3, 0.75)),
        "skip_threshold": float(rng.choice([0.0, 0.0, 0.05, 0.2])),
        "rescale_variant": str(rng.choice(["clamped", "unclamped"])),
        "score_power": float(rng.choice([1.0, 1.0, 2.0, 0.5])),
    }
