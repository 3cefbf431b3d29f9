"""Radio layer: synthetic radio map, SINR and per-TTI achievable rates.

Gains are slow-fading only (distance pathloss plus a frozen, spatially
correlated shadowing field). Rates follow Shannon capacity for long packets
and the normal approximation of the finite-blocklength rate for short ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

LOG2E = math.log2(math.e)
COVERAGE_RADIUS_M = 500.0
MIN_DISTANCE_M = 10.0


class OutsideCoverage(ValueError):
    pass


def pathloss_db(distance_m):
    """128.1 + 37.6 log10(d_km), with d clamped to ``MIN_DISTANCE_M``."""
    d = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M)
    return 128.1 + 37.6 * np.log10(d / 1000.0)


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float = 43.0
    noise_per_rb_dbm: float = -174.0 + 10.0 * math.log10(180e3)
    total_rbs: int = 100
    rb_bandwidth_hz: float = 180e3

    def __post_init__(self):
        if self.total_rbs <= 0 or self.rb_bandwidth_hz <= 0:
            raise ValueError("total_rbs and rb_bandwidth_hz must be positive")

    @property
    def total_noise_dbm(self) -> float:
        return self.noise_per_rb_dbm + 10.0 * math.log10(self.total_rbs)


@dataclass(frozen=True)
class ShortPacketParams:
    error_prob: float = 1e-5
    symbols_per_rb_tti: int = 168

    def __post_init__(self):
        if not 0.0 < self.error_prob < 0.5:
            raise ValueError("error_prob must lie in (0, 0.5)")
        if self.symbols_per_rb_tti <= 0:
            raise ValueError("symbols_per_rb_tti must be positive")


@dataclass
class RadioMap:
    """Piecewise-constant gain grid; ``gains[row, col]`` covers the square
    ``[origin + (col, row) * cell_size, ... + cell_size)``."""

    origin: tuple[float, float]
    cell_size: float
    gains: np.ndarray = field(repr=False)
    seed: int = 0

    @classmethod
    def synthesize(cls, bs_pos=(0.0, 0.0), radius=COVERAGE_RADIUS_M, cell_size=1.0,
                   shadow_sigma_db=8.0, decorrelation_m=50.0, seed=0):
        n = int(math.ceil(2 * radius / cell_size))
        origin = (bs_pos[0] - n * cell_size / 2, bs_pos[1] - n * cell_size / 2)
        centers = (np.arange(n) + 0.5) * cell_size
        xs = origin[0] + centers - bs_pos[0]
        ys = origin[1] + centers - bs_pos[1]
        dist = np.hypot(xs[None, :], ys[:, None])
        gains = -pathloss_db(dist)
        if shadow_sigma_db > 0:
            rng = np.random.default_rng(seed)
            white = rng.standard_normal((n, n))
            if decorrelation_m > 0:
                white = gaussian_filter(white, sigma=decorrelation_m / cell_size, mode="wrap")
                white /= white.std()
            gains = gains - shadow_sigma_db * white
        return cls(origin=origin, cell_size=float(cell_size), gains=gains, seed=seed)

    @property
    def shape(self):
        return self.gains.shape

    def cell_index(self, pos):
        col = math.floor((pos[0] - self.origin[0]) / self.cell_size)
        row = math.floor((pos[1] - self.origin[1]) / self.cell_size)
        rows, cols = self.gains.shape
        if not (0 <= row < rows and 0 <= col < cols):
            raise OutsideCoverage(f"outside coverage: {tuple(pos)}")
        return row, col

    def save(self, path):
        rows, cols = self.gains.shape
        with open(path, "wb") as fh:
            header = f"{self.origin[0]!r} {self.origin[1]!r} {self.cell_size!r} {rows} {cols} {self.seed}\n"
            fh.write(header.encode())
            fh.write(np.ascontiguousarray(self.gains, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        data = Path(path).read_bytes()
        head, _, body = data.partition(b"\n")
        ox, oy, cs, rows, cols, seed = head.decode().split()
        gains = np.frombuffer(body, dtype="<f8").reshape(int(rows), int(cols)).copy()
        return cls(origin=(float(ox), float(oy)), cell_size=float(cs), gains=gains, seed=int(seed))


def gain_at(rmap: RadioMap, pos) -> float:
    row, col = rmap.cell_index(pos)
    return float(rmap.gains[row, col])


def gains_at(rmap: RadioMap, xy: np.ndarray) -> np.ndarray:
    """Vectorized lookup; NaN for positions off the grid."""
    xy = np.atleast_2d(xy)
    cols = np.floor((xy[:, 0] - rmap.origin[0]) / rmap.cell_size).astype(int)
    rows = np.floor((xy[:, 1] - rmap.origin[1]) / rmap.cell_size).astype(int)
    nr, nc = rmap.gains.shape
    ok = (rows >= 0) & (rows < nr) & (cols >= 0) & (cols < nc)
    out = np.full(len(xy), np.nan)
    out[ok] = rmap.gains[rows[ok], cols[ok]]
    return out


def sinr_db(lb: LinkBudget, gain_db):
    return lb.tx_power_dbm + np.asarray(gain_db, dtype=float) - lb.total_noise_dbm


def sinr(lb: LinkBudget, gain_db):
    """Linear SINR with equal power per RB and noise over all ``total_rbs``."""
    out = 10.0 ** (sinr_db(lb, gain_db) / 10.0)
    return float(out) if np.ndim(out) == 0 else out


# Acklam's rational approximation of the standard normal quantile.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def q_func(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _norm_ppf(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # one Halley step against erfc brings the ~1e-9 approximation to machine precision
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def q_inv(eps: float) -> float:
    """Inverse Gaussian Q-function, i.e. the (1 - eps) normal quantile."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    return -_norm_ppf(eps)


def rate_long(bandwidth_hz, gamma):
    out = bandwidth_hz * np.log2(1.0 + np.asarray(gamma, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def dispersion(gamma):
    return 1.0 - 1.0 / (1.0 + np.asarray(gamma, dtype=float)) ** 2


def rate_short(bandwidth_hz, gamma, blocklength, sp: ShortPacketParams):
    """Normal-approximation rate in bits/s, floored at zero."""
    gamma = np.asarray(gamma, dtype=float)
    penalty = np.sqrt(dispersion(gamma) / blocklength) * q_inv(sp.error_prob) * LOG2E
    out = bandwidth_hz * np.maximum(np.log2(1.0 + gamma) - penalty, 0.0)
    return float(out) if out.ndim == 0 else out


def window_se(rates, total_bandwidth_hz: float, ttis: int) -> float:
    """Per-TTI average spectrum efficiency (bps/Hz) of all per-TTI, per-UE rates."""
    if ttis < 1:
        raise ValueError("ttis must be >= 1")
    return float(np.sum(rates)) / total_bandwidth_hz / ttis
