"""Independent brute-force references the tests compare against.

Everything here is deliberately written the slow, obvious way (pairwise
distances, python loops, explicit flood fill) and never calls the library
code under test.
"""
from __future__ import annotations

from collections import deque

import numpy as np


def brute_force_knn(positions: np.ndarray, k: int) -> np.ndarray:
    """k nearest neighbors by exhaustive pairwise distances."""
    d2 = ((positions[:, None, :] - positions[None, :, :]) ** 2).sum(axis=2)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def reference_region_grow(positions: np.ndarray, normals: np.ndarray,
                          curvatures: np.ndarray, k: int, smoothness: float,
                          curvature_thresh: float, min_size: int) -> np.ndarray:
    """Flood-fill region growing over the brute-force k-NN graph.

    Same rules as the library: seeds in ascending curvature order; a
    neighbor joins when its normal is within the smoothness angle of the
    front point's normal; it extends the front only when its curvature
    passes the threshold; undersized regions dissolve to -1; surviving
    region ids are dense in creation order.
    """
    n = len(positions)
    k = min(k, n)
    nbr = brute_force_knn(positions, k)
    cos_thresh = np.cos(smoothness)
    labels = [-1] * n
    region = 0
    for seed in sorted(range(n), key=lambda i: (curvatures[i], i)):
        if labels[seed] != -1:
            continue
        labels[seed] = region
        front = deque([seed])
        while front:
            p = front.popleft()
            for q in nbr[p]:
                q = int(q)
                if labels[q] != -1:
                    continue
                if float(np.dot(normals[q], normals[p])) >= cos_thresh:
                    labels[q] = region
                    if curvatures[q] <= curvature_thresh:
                        front.append(q)
        region += 1

    sizes = {}
    for lab in labels:
        sizes[lab] = sizes.get(lab, 0) + 1
    remap, next_id = {}, 0
    for rid in range(region):
        if sizes.get(rid, 0) >= min_size:
            remap[rid] = next_id
            next_id += 1
    return np.array([remap.get(lab, -1) for lab in labels], dtype=np.int32)


def occupied_voxel_count(positions: np.ndarray, voxel: float) -> int:
    """Number of distinct floor(p / voxel) cells, counted with a set."""
    cells = set()
    for p in positions:
        cells.add((int(np.floor(p[0] / voxel)),
                   int(np.floor(p[1] / voxel)),
                   int(np.floor(p[2] / voxel))))
    return len(cells)


def brute_force_confusion(gt: np.ndarray, pred: np.ndarray):
    """Per-class TP/FP/FN/n via explicit loops; gt < 0 points are ignored."""
    classes = sorted(set(int(c) for c in gt if c >= 0))
    out = {}
    for c in classes:
        tp = fp = fn = n = 0
        for g, p in zip(gt, pred):
            if g == c:
                n += 1
                if p == c:
                    tp += 1
                else:
                    fn += 1
            elif g >= 0 and p == c:
                fp += 1
        out[c] = (tp, fp, fn, n)
    return out


def reference_metrics(gt: np.ndarray, pred: np.ndarray,
                      conventional_macc: bool = False):
    """(mIOU, F-mIOU, mAcc) straight from the confusion counts."""
    conf = brute_force_confusion(gt, pred)
    ious, accs, weighted, total_n = [], [], 0.0, 0
    for tp, fp, fn, n in conf.values():
        union = tp + fp + fn
        iou = tp / union if union else 0.0
        ious.append(iou)
        weighted += n * iou
        total_n += n
        denom = tp + (fn if conventional_macc else fp)
        accs.append(tp / denom if denom else 0.0)
    return (float(np.mean(ious)), weighted / total_n, float(np.mean(accs)))


def nearest_neighbor_transfer(pred_positions: np.ndarray,
                              pred_classes: np.ndarray,
                              gt_positions: np.ndarray,
                              max_dist: float) -> np.ndarray:
    """Per-gt-point class of the nearest predicted point, brute force."""
    out = np.full(len(gt_positions), -1, dtype=np.int32)
    for i, g in enumerate(gt_positions):
        d = np.linalg.norm(pred_positions - g, axis=1)
        j = int(np.argmin(d))
        if d[j] <= max_dist:
            out[i] = pred_classes[j]
    return out


def count_visible(points: np.ndarray, frame, tol: float) -> int:
    """Per-point scalar visibility recount using only camera math."""
    intr = frame.intrinsics
    r = frame.pose.rotation
    t = frame.pose.translation
    hits = 0
    for p in points:
        cam = r.T @ (np.asarray(p, dtype=np.float64) - t)
        if cam[2] <= 0:
            continue
        u = intr.fx * cam[0] / cam[2] + intr.cx
        v = intr.fy * cam[1] / cam[2] + intr.cy
        if not (0 <= u < intr.width and 0 <= v < intr.height):
            continue
        iu, iv = int(np.rint(u)), int(np.rint(v))
        if not (0 <= iu < intr.width and 0 <= iv < intr.height):
            continue
        d = frame.depth[iv, iu]
        if d > 0 and abs(cam[2] - d) <= tol:
            hits += 1
    return hits
