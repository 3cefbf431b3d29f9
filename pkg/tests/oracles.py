"""Independent high-precision reference formulas (mpmath, 50 digits)."""
import mpmath as mp

mp.mp.dps = 50


def sinr(tx_dbm, gain_db, noise_rb_dbm, n_rbs):
    total_noise = mp.mpf(noise_rb_dbm) + 10 * mp.log10(n_rbs)
    return mp.power(10, (mp.mpf(tx_dbm) + gain_db - total_noise) / 10)


def rate_long(bw, gamma):
    return mp.mpf(bw) * mp.log(1 + mp.mpf(gamma), 2)


def q_inv(eps):
    # Q(x) = eps  <=>  x = sqrt(2) * erfinv(1 - 2 eps); solved by root finding on erfc
    f = lambda x: mp.erfc(x / mp.sqrt(2)) / 2 - eps
    return mp.findroot(f, mp.sqrt(2) * mp.erfinv(1 - 2 * mp.mpf(eps)))


def rate_short(bw, gamma, blocklength, eps):
    g = mp.mpf(gamma)
    c = 1 - 1 / (1 + g) ** 2
    val = mp.log(1 + g, 2) - mp.sqrt(c / blocklength) * q_inv(eps) / mp.log(2)
    return mp.mpf(bw) * max(val, mp.mpf(0))


def isolation(w, used):
    w, used = mp.mpf(w), mp.mpf(used)
    return mp.mpf(1) if w + used == 0 else w / (w + used)


def utility(q, se_norm, alphas, thresholds, beta):
    gate = all(qm >= th for qm, th in zip(q, thresholds))
    return mp.fsum(a * mp.mpf(qm) for a, qm in zip(alphas, q)) + (beta * mp.mpf(se_norm) if gate else 0)


def reward(q, se_norm, iso, alphas, thresholds, iso_thresholds, beta, rho):
    gate = all(qm >= th for qm, th in zip(q, thresholds))
    pos = mp.fsum(a * mp.exp(mp.mpf(qm)) for a, qm in zip(alphas, q))
    pen = mp.fsum(max(mp.mpf(0), mp.mpf(th) - mp.mpf(o)) for o, th in zip(iso, iso_thresholds))
    return pos + (beta * mp.mpf(se_norm) if gate else 0) - rho * pen


def rel_err(x, ref):
    ref = mp.mpf(ref)
    if ref == 0:
        return abs(mp.mpf(x))
    return abs((mp.mpf(x) - ref) / ref)


def bisect_q_inv(eps, lo=-40.0, hi=40.0, iters=200):
    """Bisection on the monotone Q-function (decreasing in x)."""
    lo, hi = mp.mpf(lo), mp.mpf(hi)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if mp.erfc(mid / mp.sqrt(2)) / 2 > eps:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2
