"""Straight-line reference computations used by several test modules."""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np


def _cos(x, y):
    dot = sum(a * b for a, b in zip(x, y))
    return dot / (math.sqrt(sum(a * a for a in x)) * math.sqrt(sum(b * b for b in y)))


def doc_distribution(expr_vecs, centroids, sigma2):
    """Mean over expressions of the softmax of cosine / sigma2, in plain loops."""
    K = len(centroids)
    acc = [0.0] * K
    for e in expr_vecs:
        z = [_cos(e, c) / sigma2 for c in centroids]
        m = max(z)
        w = [math.exp(v - m) for v in z]
        s = sum(w)
        for k in range(K):
            acc[k] += w[k] / s
    return [v / len(expr_vecs) for v in acc]


def entropy(p):
    return -sum(x * math.log(x) for x in p if x > 0)


def sequential_prob(dist, indices, floor=0.01):
    eligible = [x if x >= floor else 0.0 for x in dist]
    prob = 1.0
    for k in indices:
        total = sum(eligible)
        prob *= eligible[k] / total
        eligible[k] = 0.0
    return prob


def reconstruction_distortion(doc, indices, names, dist, gateway, N2):
    codes = [(names[k], float(dist[k])) for k in indices]
    recon = [gateway.reconstruct_document(doc.topic_id, codes, sample_index=j) for j in range(N2)]
    vecs = gateway.embed_texts([doc.text] + recon)
    return -sum(_cos(vecs[0], v) for v in vecs[1:]) / N2


def score(docs, exprs_by_doc, codebook, records, cfg, gateway):
    """Monte-Carlo rate-distortion score recomputed from the kept code sets.

    ``records`` only supplies which code sets were kept for each document;
    distributions, set weights, distortions and entropies are rebuilt here.
    """
    sigma2 = codebook.sigma ** 2
    centroids = [list(c.centroid) for c in codebook.codes]
    names = [c.name for c in codebook.codes]
    kept = defaultdict(list)
    for r in records:
        kept[r.doc_id].append(r.code_set.indices)
    scored = [d for d in docs if exprs_by_doc.get(d.id)]
    N = len(scored)
    K = len(centroids)
    dist_sum, entropy_sum, usage = 0.0, 0.0, [0.0] * K
    for doc in scored:
        q = doc_distribution([list(e.embedding) for e in exprs_by_doc[doc.id]], centroids, sigma2)
        raw = [sequential_prob(q, s) for s in kept[doc.id]]
        total = sum(raw)
        for s, w in zip(kept[doc.id], raw):
            d = reconstruction_distortion(doc, s, names, q, gateway, cfg.N2)
            dist_sum += (w / total) * d
        entropy_sum += entropy(q)
        for k in range(K):
            usage[k] += q[k]
    n_total = sum(usage)
    global_h = entropy([u / n_total for u in usage])
    return (-(dist_sum / N - cfg.beta1 * cfg.M * entropy_sum / N)
            - cfg.global_entropy_sign * cfg.beta2 * cfg.M * global_h)


def purity(groups, labels):
    """Fraction of items whose group's majority label equals their own label."""
    hits = 0
    for g in groups:
        counts = np.bincount([labels[i] for i in g])
        hits += counts.max()
    return hits / sum(len(g) for g in groups)


def pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def _sample_var(v):
    m = sum(v) / len(v)
    return sum((x - m) ** 2 for x in v) / (len(v) - 1)


def cronbach_alpha(X):
    n, k = len(X), len(X[0])
    item_vars = sum(_sample_var([X[i][j] for i in range(n)]) for j in range(k))
    return k / (k - 1) * (1 - item_vars / _sample_var([sum(row) for row in X]))


def coefficient_of_variation(x):
    return math.sqrt(_sample_var(x)) / abs(sum(x) / len(x))


def cohen_kappa(a, b):
    """Agreement from the confusion table, chance from its margins."""
    cats = sorted(set(a) | set(b))
    n = len(a)
    table = {(i, j): 0 for i in cats for j in cats}
    for x, y in zip(a, b):
        table[(x, y)] += 1
    p_o = sum(table[(c, c)] for c in cats) / n
    p_e = sum(sum(table[(c, j)] for j in cats) * sum(table[(i, c)] for i in cats) for c in cats) / n ** 2
    return (p_o - p_e) / (1 - p_e)


def uot_objective(pi, a, b, D, eps, gamma):
    """Transport cost plus entropy plus generalised-KL marginal penalties, in loops."""
    K, L = len(a), len(b)

    def gkl(p, q):
        return sum((x * math.log(x / y) if x > 0 else 0.0) - x + y for x, y in zip(p, q))

    cost = sum(D[i][j] * pi[i][j] for i in range(K) for j in range(L))
    ent = sum((pi[i][j] * math.log(pi[i][j]) if pi[i][j] > 0 else 0.0) - pi[i][j]
              for i in range(K) for j in range(L))
    rows = [sum(pi[i][j] for j in range(L)) for i in range(K)]
    cols = [sum(pi[i][j] for i in range(K)) for j in range(L)]
    return cost + eps * ent + gamma * (gkl(rows, a) + gkl(cols, b))


def ordered_tuple_entropy(p, M):
    """Entropy of M sequential draws without replacement, by walking every ordered tuple."""
    from itertools import permutations

    h = 0.0
    for tup in permutations(range(len(p)), M):
        prob, left = 1.0, 1.0
        for k in tup:
            prob *= p[k] / left
            left -= p[k]
        if prob > 0:
            h -= prob * math.log(prob)
    return h
