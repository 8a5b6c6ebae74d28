#!/usr/bin/env python3
"""Regenerates the frozen scalar fixtures asserted in tests/test_losses.cpp.

Evaluates the four contrastive losses on a fixed 4-row embedding batch by
direct high-precision formula evaluation (mpmath, 50 digits), independently
of the C++ implementation. Run and paste the printed constants if the
fixture ever changes.
"""
from mpmath import mp, mpf, exp, log, sqrt

mp.dps = 50

# fixture: 4 unit-norm 2-d embeddings, labels, partner structure (0<->1, 2<->3)
Z = [
    [mpf(1), mpf(0)],
    [mpf(0), mpf(1)],
    [mpf(-1), mpf(0)],
    [sqrt(2) / 2, sqrt(2) / 2],
]
labels = [0, 0, 1, 0]
partner = {0: 1, 1: 0, 2: 3, 3: 2}
tau = mpf("0.5")
lam = mpf(2)
alpha = mpf(1)
N = 4

def dot(a, b):
    return a[0] * b[0] + a[1] * b[1]

def s(i, k):
    return dot(Z[i], Z[k]) / tau

P = {i: [j for j in range(N) if j != i and labels[j] == labels[i]] for i in range(N)}
Q = {i: [j for j in range(N) if labels[j] != labels[i]] for i in range(N)}

print("P:", P)
print("Q:", Q)

# modified loss: l_i = (-alpha/|P|) sum_{p in P} log( exp(s_ip) / (sum_{p' in P} exp(s_ip') + lam*sum_q exp(s_iq)) )
def modified(i):
    if not P[i]:
        return None
    D = sum(exp(s(i, p)) for p in P[i]) + lam * sum(exp(s(i, q)) for q in Q[i])
    acc = mpf(0)
    for p in P[i]:
        acc += log(exp(s(i, p)) / D)
    return -alpha / len(P[i]) * acc

# self loss: l_i = -log( exp(s_ij) / sum_{k != i} exp(s_ik) )
def self_loss(i):
    j = partner[i]
    D = sum(exp(s(i, k)) for k in range(N) if k != i)
    return -log(exp(s(i, j)) / D)

# sup loss: l_i = (-1/|P|) sum_{p in P} log( exp(s_ip) / sum_{k != i} exp(s_ik) )
def sup(i):
    if not P[i]:
        return None
    D = sum(exp(s(i, k)) for k in range(N) if k != i)
    acc = mpf(0)
    for p in P[i]:
        acc += log(exp(s(i, p)) / D)
    return -acc / len(P[i])

# elim loss: l_i = -log( exp(s_ij) / (exp(s_ij) + sum_{k != i, k != j, k not in P} exp(s_ik)) )
def elim(i):
    j = partner[i]
    D = exp(s(i, j))
    for k in range(N):
        if k != i and k != j and k not in P[i]:
            D += exp(s(i, k))
    return -log(exp(s(i, j)) / D)

def fmt(x):
    return mp.nstr(x, 17)

for name, fn in [("modified", modified), ("self", self_loss), ("sup", sup), ("elim", elim)]:
    per = [fn(i) for i in range(N)]
    vals = [v for v in per if v is not None]
    mean = sum(vals) / len(vals)
    print(f"{name}: per-anchor =", [fmt(v) if v is not None else "skip" for v in per])
    print(f"{name}: mean = {fmt(mean)}  (over {len(vals)} anchors)")

# weighted cross-entropy fixture: 3 samples, 2 classes, class weights (1.5, 0.75)
print("\n--- weighted cross-entropy fixture ---")
logits = [[mpf("0.2"), mpf("-0.1")], [mpf("1.5"), mpf("2.0")], [mpf("-0.3"), mpf("0.4")]]
y = [0, 1, 0]
w = [mpf("1.5"), mpf("0.75")]
total = mpf(0)
for i in range(3):
    zmax = max(logits[i])
    lse = zmax + log(sum(exp(v - zmax) for v in logits[i]))
    ce = -(logits[i][y[i]] - lse)
    total += w[y[i]] * ce
total /= 3
print("weighted CE =", fmt(total))
