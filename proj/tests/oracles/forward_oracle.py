"""Straight-line forward pass for the closed-form 4-8-2 fixture used in test_model.cpp."""
from mpmath import mp, mpf, sin, cos, exp, log

mp.dps = 40

def w1(i, j): return sin(mpf(1 + 4 * i + j)) / 2      # 8 x 4
def b1(i): return cos(mpf(i)) / 10
def w2(i, j): return sin(mpf(3 + 8 * i + j) / 3)      # 2 x 8
def b2(i): return mpf(i) / 20 - mpf(1) / 40
def x(n, j): return 2 * cos(mpf(7 * n + 13 * j) / 10)
def y(n): return n % 2

total = mpf(0)
correct = 0
for n in range(8):
    h = [max(mpf(0), sum(w1(i, j) * x(n, j) for j in range(4)) + b1(i)) for i in range(8)]
    z = [sum(w2(c, i) * h[i] for i in range(8)) + b2(c) for c in range(2)]
    m = max(z)
    lse = m + log(sum(exp(v - m) for v in z))
    total += lse - z[y(n)]
    correct += int(max(range(2), key=lambda c: (z[c], -c)) == y(n))
print("loss", mp.nstr(total / 8, 25))
print("accuracy", correct / 8)
