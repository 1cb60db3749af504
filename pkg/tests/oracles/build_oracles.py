"""Independent reference values, frozen into oracle_values.json.

Nothing here imports the package under test. Run from the repo root:

    python tests/oracles/build_oracles.py
"""
import json
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import sympy as sp
from scipy.optimize import root

OUT = Path(__file__).with_name("oracle_values.json")

FIG1 = [(1, 2), (2, 3)]
FIG3 = [(1, 2), (1, 3), (1, 4), (1, 5), (2, 3), (2, 6), (3, 4), (5, 7), (7, 8), (7, 9), (8, 9)]
FIG5 = FIG3 + [(8, 10)]


def nbrs(n, edges):
    out = {i: set() for i in range(1, n + 1)}
    for a, b in edges:
        out[a].add(b)
        out[b].add(a)
    return out


def theta_loop(n, edges, q):
    nb = nbrs(n, edges)
    res = []
    for i in range(1, n + 1):
        v = q[i - 1]
        for j in nb[i]:
            v *= 1 - q[j - 1]
        res.append(v)
    return res


def nash_loop(n, edges, y, tol=1e-12, cap=10**6):
    nb = nbrs(n, edges)
    q = [0.0] * n
    for _ in range(cap):
        new = []
        for i in range(1, n + 1):
            p = 1.0
            for j in nb[i]:
                p *= 1 - q[j - 1]
            new.append(min(y[i - 1] / p, 1.0) if p > 0 else 1.0)
        if max(abs(a - b) for a, b in zip(new, q)) < tol:
            return new
        q = new
    raise RuntimeError


def rim_frac(n, edges, q):
    nb = nbrs(n, edges)
    return [sum(q[i - 1] / (1 - q[j - 1]) + q[j - 1] / (1 - q[i - 1]) for j in nb[i])
            for i in range(1, n + 1)]


def jain_loop(n, edges, theta):
    nb = nbrs(n, edges)
    w = [(len(nb[i]) + 1) * theta[i - 1] for i in range(1, n + 1)]
    return sum(w) ** 2 / (n * sum(x * x for x in w))


def pareto_by_jacobian(n, edges, theta):
    """Ray search located by the sign of det(d theta / d q) along the branch
    continued from the origin, not by best-response convergence."""
    nb = nbrs(n, edges)
    th = np.array(theta)

    def f(q, d):
        return np.array(theta_loop(n, edges, list(q))) - d * th

    def det(q):
        m = np.zeros((n, n))
        for i in range(1, n + 1):
            m[i - 1, i - 1] = 1 - q[i - 1]
            for j in nb[i]:
                m[i - 1, j - 1] = -q[i - 1]
        return np.linalg.det(m)

    q = np.zeros(n)
    d, step = 0.0, 0.01
    while True:
        sol = root(f, q, args=(d + step,), method="hybr")
        bad = np.max(np.abs(f(sol.x, d + step))) > 1e-12
        if bad or det(sol.x) <= 0 or np.any(sol.x >= 1) or np.any(sol.x < q - 1e-12):
            if step < 1e-7:
                return d
            step /= 2
            continue
        d += step
        q = sol.x


def pi_unroll(k_p, k_i, q, e_prev, r):
    e = 2 - r
    return q + k_p * (e - e_prev) + k_i * e, e


def main():
    v = {}
    v["fig1_theta_half"] = theta_loop(3, FIG1, [0.5, 0.5, 0.5])
    y = [0.1, 0.1, 0.1]
    v["fig1_nash_y01"] = nash_loop(3, FIG1, y)
    # one best-response pass from q = 0.9 clamps everywhere
    v["fig1_c12_half"] = -(0.5 / 0.5 + 0.5 / 0.5)

    x = sp.symbols("x")
    # leader 7 of the three-user tree: in-tree neighbours 8, 9; outside neighbour 5 at 1/5
    expr = 2 * 2 * x / (1 - x) + x / (1 - sp.Rational(1, 5)) + sp.Rational(1, 5) / (1 - x) - 2
    roots = [r for r in sp.solve(sp.together(expr).as_numer_denom()[0], x) if r.is_real and 0 < r < 1]
    v["fig3_tree7_map"] = float(roots[0])

    q5 = [F(1, 5)] * 6 + [F(1, 4)] * 4
    r5 = rim_frac(10, FIG5, q5)
    v["fig5_rim"] = [float(r) for r in r5]
    v["fig5_rim_exact"] = [str(r) for r in r5]
    th5 = theta_loop(10, FIG5, [float(a) for a in q5])
    v["fig5_theta"] = th5
    v["fig5_sum_theta"] = sum(th5)
    v["fig5_jain"] = jain_loop(10, FIG5, th5)
    v["fig5_d_pareto"] = pareto_by_jacobian(10, FIG5, th5)

    q3 = [0.2] * 6 + [v["fig3_tree7_map"]] * 3
    th3 = theta_loop(9, FIG3, q3)
    v["fig3_d_pareto"] = pareto_by_jacobian(9, FIG3, th3)

    v["leader_gain"] = {str(n): float(F(-2 * (n + 1) ** 2, n)) for n in (1, 4)}
    v["pi_gains"] = {str(n): [float(F(2, 10) * n / (n + 1) ** 2),
                              float(F(2, 10) * n / (n + 1) ** 2 / F(17, 10))] for n in (1, 4)}
    kp, ki = v["pi_gains"]["4"]
    # one step from q=0.05 on the lone-tree plant R = 2*4*q/(1-q)
    r0 = 8 * 0.05 / 0.95
    v["pi_one_step"] = pi_unroll(kp, ki, 0.05, 2 - r0, r0)[0]
    q, e_prev, hit = 0.05, 2 - r0, None
    for t in range(1, 200):
        r = 8 * q / (1 - q)
        q, e_prev = pi_unroll(kp, ki, q, e_prev, r)
        q = min(max(q, 0.001), 0.999)
        if hit is None and abs(q - 0.2) <= 1e-3:
            hit = t
        elif abs(q - 0.2) > 1e-3:
            hit = None
    v["pi_plant_settle_iter"] = hit

    # chance that listener 1 of the two-tree topology misses one of its 4 neighbours
    # during a 1000-slot window at q = 0.05 (union bound)
    nb = nbrs(9, FIG3)
    miss = 0.0
    for j in nb[1]:
        others = nb[1] - {j}
        p = 0.95 * 0.05 * 0.95 ** len(others)
        miss += (1 - p) ** 1000
    v["nd_miss_bound"] = miss

    OUT.write_text(json.dumps(v, indent=2, sort_keys=True) + "\n")
    print(json.dumps(v, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
