"""High-precision reference values for the privacy/generalization bound calculator.

Evaluates the closed forms verbatim at 50 significant digits. The numbers
printed here are frozen into tests/test_dp_bounds.cpp.
"""
from mpmath import mp, mpf, sqrt, log, exp, ceil

mp.dps = 50


def eps_tilde(N, tau, beta, Dg, sigma, delta):
    N, tau, beta, Dg, sigma, delta = map(mpf, (N, tau, beta, Dg, sigma, delta))
    num = sqrt(2) * beta * Dg * sigma / tau * sqrt(log(1 / delta)) + beta**2 * Dg**2 / tau**2
    return log((N - tau) / N + tau / N * exp(num / (2 * sigma**2)))


def compose(T, e, delta_tilde, delta):
    T, e, delta_tilde, delta = map(mpf, (T, e, delta_tilde, delta))
    ep = sqrt(2 * T * log(1 / delta_tilde) * e**2) + T * e * (exp(e) - 1) / (exp(e) + 1)
    if T * e - ep <= 0:
        return ep, None
    q = delta / (1 + exp(e))
    c = ceil(ep / e)
    t1 = exp(-(ep + T * e) / 2) * ((1 / (1 + exp(e))) * (2 * T * e / (T * e - ep)))**T \
        * ((T * e + ep) / (T * e - ep))**(-(ep + T * e) / (2 * e))
    t2 = 2 - (1 - exp(e) * q)**c * (1 - q)**(T - c)
    t3 = -(1 - q)**T
    return ep, t1 + t2 + t3


if __name__ == "__main__":
    print("eps_tilde(100,10,0.5,1,1,0.01) =", mp.nstr(eps_tilde(100, 10, 0.5, 1, 1, 0.01), 25))
    for args in [(10, 0.008, 1e-5, 0.01), (1000, 0.008, 1e-5, 0.01), (2000, 0.01, 1e-3, 0.05)]:
        ep, dp = compose(*args)
        print("compose", args, "eps' =", mp.nstr(ep, 25), "delta' =", dp if dp is None else mp.nstr(dp, 25))
        if dp is not None and 0 < ep < 2:
            fail = exp(-ep) * dp / ep * log(2 / ep)
            cond = 2 / ep**2 * log(16 / (exp(-ep) * dp))
            print("   gap =", mp.nstr(9 * ep, 25), "failure =", mp.nstr(fail, 25), "N_min =", mp.nstr(cond, 25))
    # zero-step limit of delta' (ratio form, eps_tilde -> 0) for T = 1000, delta_tilde = 1e-5, delta = 0.01
    T, dt, d = mpf(1000), mpf('1e-5'), mpf('0.01')
    r = sqrt(2 * T * log(1 / dt))
    t1 = (T / (T - r))**T * ((T + r) / (T - r))**(-(r + T) / 2)
    print("delta'(eps=0, T=1000) =", mp.nstr(t1 + 2 - 2 * (1 - d / 2)**T, 25))
