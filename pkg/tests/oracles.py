"""Independent reference implementations used to cross-check the package.

Everything here is written the slow, obvious way (scalar loops, python
floats, brute-force search) on purpose: these are the second route for
every dual-route check, so they must not share code with the package.
"""

from collections import deque

import numpy as np


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def point_in_polygon_scalar(rings, x, y):
    """Even-odd containment for one point, plain python floats.

    Same edge convention as the package rasterizer: horizontal edges are
    ignored, a crossing counts when the scanline straddles the edge's y
    span (top exclusive, bottom inclusive) and the point sits strictly
    on the interior side of the edge.
    """
    inside = False
    for ring in rings:
        for (x0, y0), (x1, y1) in zip(ring[:-1], ring[1:]):
            if y0 == y1:
                continue
            if (y0 > y) != (y1 > y):
                cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
                hit = cross > 0 if y1 > y0 else cross < 0
                if hit:
                    inside = not inside
    return inside


def rasterize_scalar(poly_value_pairs, width, height, transform, fill=0.0):
    """Painter-order rasterization by looping over every pixel center."""
    out = np.full((height, width), fill, dtype=np.float64)
    for poly, value in poly_value_pairs:
        rings = list(poly.rings())
        for r in range(height):
            for c in range(width):
                x, y = transform.pixel_to_world(c, r)
                if point_in_polygon_scalar(rings, x, y):
                    out[r, c] = value
    return out


def mc_intersection_area(rings_a, rings_b, rng, n=20000):
    """Monte-Carlo area of intersection of two polygons (bbox sampling)."""
    xs = [p[0] for ring in rings_a for p in ring]
    ys = [p[1] for ring in rings_a for p in ring]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    px = rng.uniform(x0, x1, size=n)
    py = rng.uniform(y0, y1, size=n)
    hits = 0
    for x, y in zip(px, py):
        if point_in_polygon_scalar(rings_a, x, y) and \
                point_in_polygon_scalar(rings_b, x, y):
            hits += 1
    return hits / n * (x1 - x0) * (y1 - y0)


# ---------------------------------------------------------------------------
# connected components
# ---------------------------------------------------------------------------

def flood_fill_count(grid):
    """8-connected component count by breadth-first flood fill."""
    g = np.asarray(grid).astype(bool)
    h, w = g.shape
    seen = np.zeros((h, w), dtype=bool)
    count = 0
    for r in range(h):
        for c in range(w):
            if not g[r, c] or seen[r, c]:
                continue
            count += 1
            seen[r, c] = True
            queue = deque([(r, c)])
            while queue:
                rr, cc = queue.popleft()
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        r2, c2 = rr + dr, cc + dc
                        if 0 <= r2 < h and 0 <= c2 < w and g[r2, c2] \
                                and not seen[r2, c2]:
                            seen[r2, c2] = True
                            queue.append((r2, c2))
    return count


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def confusion_scalar(ref, pred, n_classes, ignore=(255,)):
    """Nested-list tally, one pixel at a time."""
    m = [[0] * n_classes for _ in range(n_classes)]
    for a, b in zip(np.asarray(ref).ravel().tolist(),
                    np.asarray(pred).ravel().tolist()):
        if a in ignore:
            continue
        m[int(a)][int(b)] += 1
    return m


def metrics_scalar(matrix):
    """(oa, kappa, fwiou, per-class iou) from a nested-list matrix."""
    k = len(matrix)
    total = sum(sum(row) for row in matrix)
    row = [sum(matrix[i]) for i in range(k)]
    col = [sum(matrix[i][j] for i in range(k)) for j in range(k)]
    oa = sum(matrix[i][i] for i in range(k)) / total
    p_e = sum(row[i] * col[i] for i in range(k)) / (total * total)
    kappa = float("nan") if abs(1.0 - p_e) < 1e-15 else (oa - p_e) / (1.0 - p_e)
    ious = []
    fwiou = 0.0
    for i in range(k):
        union = row[i] + col[i] - matrix[i][i]
        if union > 0:
            iou = matrix[i][i] / union
            fwiou += (row[i] / total) * iou
            ious.append(iou)
        else:
            ious.append(None)
    return oa, kappa, fwiou, ious


def footprint_scalar(pred, ref):
    tp = fp = fn = 0
    for p, r in zip(np.asarray(pred).ravel().tolist(),
                    np.asarray(ref).ravel().tolist()):
        if p and r:
            tp += 1
        elif p and not r:
            fp += 1
        elif r and not p:
            fn += 1
    if tp + fp + fn == 0:
        return 1.0, 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn), tp / (tp + fp + fn)


def composition_scalar(labels, groups):
    lab = np.asarray(labels).ravel().tolist()
    building = [v for v in lab if 1 <= v <= 7]
    shares = {}
    for name, codes in groups.items():
        shares[name] = sum(1 for v in building if v in codes) / len(building)
    return shares


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def central_difference(f, arr, index, eps=1e-3):
    """d f / d arr[index] by the two-sided quotient; arr is modified and
    restored in place."""
    orig = arr[index]
    arr[index] = orig + eps
    f_hi = f()
    arr[index] = orig - eps
    f_lo = f()
    arr[index] = orig
    return (f_hi - f_lo) / (2.0 * eps)


def relative_error(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)


# ---------------------------------------------------------------------------
# naive tensor ops
# ---------------------------------------------------------------------------

def conv2d_scalar(x, weight, bias, stride=1):
    """Direct six-loop convolution with zero padding, float64."""
    n, cin, h, w = x.shape
    cout, _, k, _ = weight.shape
    pad = (k - 1) // 2
    ho = -(-h // stride)
    wo = -(-w // stride)
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    for b in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cin):
                        for di in range(k):
                            for dj in range(k):
                                ii = i * stride + di - pad
                                jj = j * stride + dj - pad
                                if 0 <= ii < h and 0 <= jj < w:
                                    acc += float(x[b, c, ii, jj]) * \
                                        float(weight[o, c, di, dj])
                    out[b, o, i, j] = acc + (float(bias[o]) if bias is not None else 0.0)
    return out


def resize_scalar(x, out_h, out_w):
    """Separable linear resize with border extrapolation, scalar math."""
    n, c, h, w = x.shape

    def axis_weights(n_in, n_out):
        rows = []
        for i in range(n_out):
            s = (i + 0.5) * (n_in / n_out) - 0.5
            seg = min(max(int(np.floor(s)), 0), n_in - 2)
            f = s - seg
            rows.append((seg, 1.0 - f, f))
        return rows

    wh = axis_weights(h, out_h)
    ww = axis_weights(w, out_w)
    out = np.zeros((n, c, out_h, out_w), dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            for i, (si, a0, a1) in enumerate(wh):
                for j, (sj, b0, b1) in enumerate(ww):
                    out[b, ch, i, j] = (
                        a0 * b0 * float(x[b, ch, si, sj]) +
                        a0 * b1 * float(x[b, ch, si, sj + 1]) +
                        a1 * b0 * float(x[b, ch, si + 1, sj]) +
                        a1 * b1 * float(x[b, ch, si + 1, sj + 1]))
    return out


def masked_ce_scalar(logits, labels, supervision):
    """Loss only, via per-pixel python-float softmax."""
    n, k, h, w = logits.shape
    total = 0.0
    count = 0
    for b in range(n):
        for i in range(h):
            for j in range(w):
                if not supervision[b, i, j]:
                    continue
                count += 1
                vec = [float(logits[b, q, i, j]) for q in range(k)]
                mx = max(vec)
                z = sum(np.exp(v - mx) for v in vec)
                total -= (vec[int(labels[b, i, j])] - mx - np.log(z))
    return total / count


# ---------------------------------------------------------------------------
# synthetic-city probe
# ---------------------------------------------------------------------------

def nearest_profile_accuracy(truth, bh, ntl, profiles):
    """Pixelwise nearest-regime classification on building pixels.

    Uses (height, light) jointly where the height grid carries a value
    and light alone where it does not (a zero cell means the coarse grid
    missed the footprint, not that the building is flat).
    """
    codes = sorted(profiles)
    mask = truth > 0
    fb = bh[mask]
    fn = ntl[mask]
    has_h = fb > 0.5
    d_full = np.stack([
        ((fb - profiles[c].bh_mean) / profiles[c].bh_std) ** 2 +
        ((fn - profiles[c].ntl_mean) / profiles[c].ntl_std) ** 2
        for c in codes])
    d_light = np.stack([
        ((fn - profiles[c].ntl_mean) / profiles[c].ntl_std) ** 2
        for c in codes])
    arr = np.array(codes)
    pred = np.where(has_h, arr[d_full.argmin(axis=0)], arr[d_light.argmin(axis=0)])
    return float((pred == truth[mask]).mean())
