"""Independent reference values for the numerics unit tests.

Run once; the printed values are frozen into tests/test_numerics.cpp.
"""
import mpmath as mp

mp.mp.dps = 50

# softmax([1, 2, 3])
e = [mp.e ** x for x in (1, 2, 3)]
z = sum(e)
print("softmax", [mp.nstr(v / z, 20) for v in e])

# smoothed cross entropy, logits [2, 0, 0], gold 0, eps 0.1, K 3
logits = [mp.mpf(2), mp.mpf(0), mp.mpf(0)]
lse = mp.log(sum(mp.e ** x for x in logits))
logp = [x - lse for x in logits]
eps, k = mp.mpf("0.1"), 3
q = [(1 - eps) * (1 if i == 0 else 0) + eps / k for i in range(k)]
print("ce_smoothed", mp.nstr(-sum(qi * lp for qi, lp in zip(q, logp)), 20))
print("ce_plain", mp.nstr(-logp[0], 20))

# Adam on f(x) = x^2 from x = 1, lr 1e-3, betas (0.9, 0.999), eps 1e-8
x, m, v = 1.0, 0.0, 0.0
b1, b2, lr, ad_eps = 0.9, 0.999, 1e-3, 1e-8
for t in range(1, 4):
    g = 2.0 * x
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    mh = m / (1 - b1 ** t)
    vh = v / (1 - b2 ** t)
    x = x - lr * mh / (vh ** 0.5 + ad_eps)
    print("adam_step", t, repr(x))
