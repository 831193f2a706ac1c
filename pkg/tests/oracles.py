"""Slow, direct reference implementations used as test oracles.

Nothing here imports the package's numerical code; each oracle restates a
rule in the plainest form available (loops, exact arithmetic, quadrature).
"""

import math

R_EARTH = 6_371_000.0


def cosine_law_distance(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return R_EARTH * math.acos(max(-1.0, min(1.0, c)))


def hav(lat1, lon1, lat2, lon2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    a = (math.sin((p2 - p1) / 2) ** 2
         + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2)
    return 2 * R_EARTH * math.asin(min(1.0, math.sqrt(a)))


def winding_number(x, y, ring):
    """Nonzero winding number test; ``ring`` is a list of (x, y) without repeated first vertex."""
    wn = 0
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
        if y0 <= y:
            if y1 > y and cross > 0:
                wn += 1
        elif y1 <= y and cross < 0:
            wn -= 1
    return wn != 0


# -- trip segmentation -----------------------------------------------------------

def pairwise_annotations(ts, lat, lon):
    """Per point: (dist_prev, dt_prev, v_prev, dist_next, dt_next, v_next); None at the ends."""
    n = len(ts)
    out = []
    for i in range(n):
        row = [None] * 6
        if i > 0:
            d = hav(lat[i - 1], lon[i - 1], lat[i], lon[i])
            t = ts[i] - ts[i - 1]
            row[0:3] = [d, t, d / t]
        if i < n - 1:
            d = hav(lat[i], lon[i], lat[i + 1], lon[i + 1])
            t = ts[i + 1] - ts[i]
            row[3:6] = [d, t, d / t]
        out.append(tuple(row))
    return out


def brute_segment(ts, lat, lon, d_thr=200.0, t_thr=900.0, v_thr=1.4):
    """Trip number per point (-1 static), recomputing each decision from scratch.

    For every point the stop it belongs to is rebuilt by scanning back over
    the slow, close predecessors; the anchor walks forward from the stop's
    first observation whenever a point leaves the anchor's neighborhood.
    """
    n = len(ts)
    ann = pairwise_annotations(ts, lat, lon)
    label = []
    trips = 0

    def slow_close(k):
        return ann[k][2] < v_thr and ann[k][0] <= d_thr

    for i in range(n):
        joins = False
        if i > 0 and label[i - 1] != -1:
            if ann[i][2] >= v_thr:
                joins = True
            elif ann[i][0] > d_thr:
                joins = False
            else:
                s = i
                while s - 1 > 0 and slow_close(s - 1) and label[s - 2] != -1 and label[s - 1] == label[s - 2]:
                    s -= 1
                anchor = s - 1
                for k in range(s, i + 1):
                    if hav(lat[anchor], lon[anchor], lat[k], lon[k]) > d_thr:
                        anchor = k - 1
                joins = ts[i] - ts[anchor] < t_thr
        if joins:
            label.append(label[i - 1])
        elif i < n - 1 and ann[i][5] >= v_thr:
            label.append(trips)
            trips += 1
        else:
            label.append(-1)
    return label


def trips_from_labels(ts, lat, lon, label):
    """(departure_ts, arrival_ts, distance_m, n_points) per trip number."""
    out = {}
    for i, k in enumerate(label):
        if k < 0:
            continue
        if k not in out:
            out[k] = [ts[i], ts[i], 0.0, 1]
        else:
            out[k][1] = ts[i]
            out[k][2] += hav(lat[i - 1], lon[i - 1], lat[i], lon[i])
            out[k][3] += 1
    return [tuple(out[k]) for k in sorted(out)]


# -- density clustering ------------------------------------------------------------

def brute_dbscan(lat, lon, eps, min_points):
    """Textbook density clustering with explicit neighbor lists.

    Core: at least ``min_points`` points (itself included) within ``eps``.
    Clusters are the connected components of core points; a border point
    takes the cluster of its nearest core neighbor, lowest index on ties.
    Clusters are numbered by their smallest member index.
    """
    n = len(lat)
    dist = [[hav(lat[i], lon[i], lat[j], lon[j]) for j in range(n)] for i in range(n)]
    nb = [[j for j in range(n) if j != i and dist[i][j] <= eps] for i in range(n)]
    core = [len(nb[i]) + 1 >= min_points for i in range(n)]
    comp = [-1] * n
    c = 0
    for i in range(n):
        if core[i] and comp[i] == -1:
            stack = [i]
            comp[i] = c
            while stack:
                p = stack.pop()
                for q in nb[p]:
                    if core[q] and comp[q] == -1:
                        comp[q] = c
                        stack.append(q)
            c += 1
    lab = comp[:]
    for i in range(n):
        if core[i]:
            continue
        cands = [(dist[i][j], j) for j in nb[i] if core[j]]
        if cands:
            lab[i] = comp[min(cands)[1]]
    first = {}
    for i, k in enumerate(lab):
        if k >= 0 and k not in first:
            first[k] = len(first)
    return [first[k] if k >= 0 else -1 for k in lab]


# -- phases ------------------------------------------------------------------------

def scan_phases(roc, eps=1.0, k=3):
    """(peak, inertia, fatigue) indices by exhaustive scan over finite entries; None when absent."""
    idx = [i for i, r in enumerate(roc) if r == r]
    if not idx:
        return None, None, None
    best = idx[0]
    for i in idx:
        if roc[i] > roc[best]:
            best = i
    inertia = next((i for i in idx if i > best and abs(roc[i]) < eps), None)
    if inertia is None:
        return best, None, None
    pos = idx.index(inertia)
    tail = idx[pos:]
    for a in range(len(tail)):
        if roc[tail[a]] < 0 and (a == 0 or roc[tail[a - 1]] >= 0):
            run = 0
            while a + run < len(tail) and roc[tail[a + run]] < 0:
                run += 1
            if run >= k:
                return best, inertia, tail[a]
    return best, inertia, None


# -- special functions ---------------------------------------------------------------

def t_cdf_quad(t, df):
    """Student t CDF by adaptive quadrature of the density (mpmath, 30 digits)."""
    import mpmath as mp

    mp.mp.dps = 30
    nu = mp.mpf(df)
    c = mp.gamma((nu + 1) / 2) / (mp.sqrt(nu * mp.pi) * mp.gamma(nu / 2))

    def pdf(x):
        return c * (1 + x * x / nu) ** (-(nu + 1) / 2)

    t = mp.mpf(t)
    if t <= 0:
        return float(mp.quad(pdf, [-mp.inf, t]))
    return float(mp.mpf("0.5") + mp.quad(pdf, [0, t]))
