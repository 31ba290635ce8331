"""Slow, independent reference implementations used as test oracles."""

import math

import numpy as np


def brute_force_render(positions, features, h, w, radius, k, power, sigma):
    """O(points x pixels) splat renderer written from the definition."""
    n, c = features.shape
    out = np.zeros((c, h, w))
    mask = np.zeros((h, w))
    # pixel-centre convention: centre of column j is at normalised (2j + 1 - w) / w
    px = ((positions[:, 0] + 1.0) * w - 1.0) / 2.0
    py = ((positions[:, 1] + 1.0) * h - 1.0) / 2.0
    for i in range(h):
        for j in range(w):
            hits = []
            for p in range(n):
                dist2 = (j - px[p]) ** 2 + (i - py[p]) ** 2
                if dist2 < radius * radius:
                    ws = (1 - dist2 / radius**2) ** power
                    if ws > 0:
                        hits.append((positions[p, 2], p, ws))
            if not hits:
                continue
            hits.sort()
            hits = hits[:k]
            zmin = hits[0][0]
            total = 0.0
            acc = np.zeros(c)
            for z, p, ws in hits:
                wt = ws * math.exp(-(z - zmin) / (sigma * zmin))
                total += wt
                acc += wt * features[p]
            out[:, i, j] = acc / total
            mask[i, j] = min(1.0, total)
    return out, mask


def flood_fill_components(binary):
    """8-connected components by explicit stack flood fill; list of pixel lists."""
    h, w = binary.shape
    seen = np.zeros_like(binary, dtype=bool)
    comps = []
    for i in range(h):
        for j in range(w):
            if not binary[i, j] or seen[i, j]:
                continue
            stack = [(i, j)]
            seen[i, j] = True
            pix = []
            while stack:
                a, b = stack.pop()
                pix.append((a, b))
                for da in (-1, 0, 1):
                    for db in (-1, 0, 1):
                        y, x = a + da, b + db
                        if 0 <= y < h and 0 <= x < w and binary[y, x] and not seen[y, x]:
                            seen[y, x] = True
                            stack.append((y, x))
            comps.append(pix)
    return comps


def box_iou(a, b):
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def exhaustive_ap(preds, gts, thr):
    """AP from the definition: rank, match greedily, then integrate the precision envelope.

    preds: per image list of (box, score); gts: per image list of boxes.
    """
    ranked = sorted(
        ((-s, img, tuple(b)) for img, lst in enumerate(preds) for b, s in lst)
    )
    used = [set() for _ in gts]
    total = sum(len(g) for g in gts)
    tp_flags = []
    for _, img, box in ranked:
        best, best_j = thr, None
        for j, g in enumerate(gts[img]):
            if j in used[img]:
                continue
            o = box_iou(box, g)
            if o >= best and (best_j is None or o > best):
                best, best_j = o, j
        if best_j is None:
            tp_flags.append(0)
        else:
            used[img].add(best_j)
            tp_flags.append(1)
    if total == 0:
        return 0.0
    points = []
    tp = 0
    for i, f in enumerate(tp_flags, 1):
        tp += f
        points.append((tp / total, tp / i))
    ap = 0.0
    prev_r = 0.0
    for i, (r, _) in enumerate(points):
        env = max(p for _, p in points[i:])
        ap += (r - prev_r) * env
        prev_r = r
    return ap
