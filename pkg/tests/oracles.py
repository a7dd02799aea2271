"""Independent scalar-loop reference implementations used by the tests.

Deliberately naive: plain Python floats and loops, no numpy vectorisation,
so they share no code path with the package.
"""
import math


def dist(p, g):
    return math.sqrt((p[0] - g[0]) ** 2 + (p[1] - g[1]) ** 2)


def pck_loop(preds, gts, tau):
    hits = total = 0
    for pred, gt in zip(preds, gts):
        for p, g in zip(pred, gt):
            total += 1
            if dist(p, g) <= tau:
                hits += 1
    return hits / total


def oks_loop(preds, gts, scales, k):
    acc = 0.0
    total = 0
    for pred, gt, s in zip(preds, gts, scales):
        for p, g in zip(pred, gt):
            d = dist(p, g)
            acc += math.exp(-(d * d) / (2.0 * s * s * k * k))
            total += 1
    return acc / total


def mpjpe_loop(preds, gts):
    acc = 0.0
    total = 0
    for pred, gt in zip(preds, gts):
        for p, g in zip(pred, gt):
            acc += dist(p, g)
            total += 1
    return acc / total


def bce_loop(pred, target, eps=1e-7):
    """Mean binary cross-entropy over nested lists of any depth."""
    flat_p, flat_t = [], []

    def walk(a, b):
        if isinstance(a, (list, tuple)):
            for x, y in zip(a, b):
                walk(x, y)
        else:
            flat_p.append(float(a))
            flat_t.append(float(b))

    walk(pred, target)
    acc = 0.0
    for p, t in zip(flat_p, flat_t):
        p = min(max(p, eps), 1.0 - eps)
        acc += t * math.log(p) + (1.0 - t) * math.log(1.0 - p)
    return -acc / len(flat_p)
