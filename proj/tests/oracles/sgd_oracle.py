"""Nesterov momentum with additive weight decay, in exact rational arithmetic.

    g = grad + wd * theta;  v = mu * v + g;  theta -= lr * (g + mu * v)

on the quadratic 1/2 theta^2 (grad = theta).
"""
from fractions import Fraction as F


def run(theta, lr, mu, wd, steps):
    v = F(0)
    out = []
    for _ in range(steps):
        g = theta + wd * theta
        v = mu * v + g
        theta = theta - lr * (g + mu * v)
        out.append(theta)
    return out


for t in run(F(1), F(1, 10), F(9, 10), F(0), 3):
    print("wd=0", t, float(t))
for t in run(F(1), F(1, 10), F(9, 10), F(1, 100), 2):
    print("wd=0.01", t, repr(float(t)))
