"""Composable finite-key length for BBM92 with a brute-force parameter search.

The key length is the largest integer satisfying the security constraint

    2^-t + 2 eps_pe(nu, xi) + eps_pa(nu) <= 10^-s

which, solved for the key length, gives a closed-form upper bound for every
(beta, nu, xi). The search scans a 3-D grid over those three parameters only.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .counts import CountsProfile

BETA_MIN = 1e-4
BETA_CHUNK = 8


@dataclass(frozen=True)
class SecurityConfig:
    """Security and search settings.

    ``s`` sets the composable budget 10^-s; the correctness parameter is
    ``t = log2(10^(s+2))``.
    """

    s: float = 6
    ec_efficiency: float = 1.19
    grid_n: int = 64
    beta_min: float = BETA_MIN

    def __post_init__(self) -> None:
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        if not self.s >= 1:
            out.append(f"security exponent s must be >= 1, got {self.s}")
        if not (isinstance(self.grid_n, (int, np.integer)) and self.grid_n >= 8):
            out.append(f"grid_n must be an integer >= 8, got {self.grid_n}")
        if not self.ec_efficiency >= 1:
            out.append(f"ec_efficiency must be >= 1, got {self.ec_efficiency}")
        if not 0 < self.beta_min < 0.5:
            out.append(f"beta_min must lie in (0, 0.5), got {self.beta_min}")
        return out

    @property
    def eps_qkd(self) -> float:
        return 10.0 ** (-self.s)

    @property
    def t(self) -> float:
        return (self.s + 2) * math.log2(10.0)

    @property
    def eps_cor(self) -> float:
        return 2.0 ** (-self.t)


@dataclass(frozen=True)
class BlockStats:
    """Sifted block assembled from a subset of time bins."""

    m: int
    qber: float
    bins: tuple = ()
    threshold: float = float("nan")
    errors: float = 0.0


@dataclass(frozen=True)
class SklResult:
    ell: int
    beta: float = float("nan")
    nu: float = float("nan")
    xi: float = float("nan")
    delta: float = float("nan")
    k: int = 0
    n: int = 0
    m: int = 0
    eps_pe: float = float("nan")
    eps_pa: float = float("nan")

    def row(self) -> dict:
        return {
            "ell": self.ell, "m": self.m, "delta": self.delta, "beta": self.beta,
            "nu": self.nu, "xi": self.xi, "k": self.k, "n": self.n,
            "eps_pe": self.eps_pe, "eps_pa": self.eps_pa,
        }


@dataclass
class SweepCurve:
    """Key length against block size for sampled QBER thresholds."""

    thresholds: np.ndarray
    blocks: list = field(default_factory=list)
    results: list = field(default_factory=list)

    @property
    def m(self) -> np.ndarray:
        return np.array([b.m for b in self.blocks])

    @property
    def ell(self) -> np.ndarray:
        return np.array([r.ell for r in self.results])


def binary_entropy(x):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise ValueError(f"binary entropy needs 0 <= x <= 1, got {x}")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -x * np.log2(x) - (1 - x) * np.log2(1 - x)
    h = np.where((x == 0) | (x == 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def _h2(x):
    # Unchecked entropy for the search grid; inputs are in (0, 1) by construction.
    return -x * np.log2(x) - (1 - x) * np.log2(1 - x)


def gamma(x, m):
    return 1.0 / (x + 1) + 1.0 / (m - x + 1)


def _eps_pe_sq(m, k, n, delta, nu, xi):
    """Squared parameter-estimation error; +inf where the bound is vacuous."""
    nu_p = nu - xi
    g = gamma(m * (delta + xi), m)
    with np.errstate(over="ignore"):
        val = np.exp(-2.0 * m * k * xi**2 / (n + 1)) + np.exp(-2.0 * g * ((n * nu_p) ** 2 - 1))
    return np.where(n * nu_p >= 1, val, np.inf)


def epsilon_pe(m, k, n, delta, nu, xi) -> float:
    """Parameter-estimation failure probability.

    Raises
    ------
    ValueError
        Outside ``0 < xi < nu``, ``k + n = m`` or ``delta + xi <= 1``.
    """
    if not 0 < xi < nu:
        raise ValueError(f"need 0 < xi < nu, got xi={xi}, nu={nu}")
    if k + n != m or k < 0 or n < 0:
        raise ValueError(f"need k + n = m with k, n >= 0, got k={k}, n={n}, m={m}")
    if delta + xi > 1:
        raise ValueError(f"need delta + xi <= 1, got {delta + xi}")
    return float(np.sqrt(_eps_pe_sq(m, k, n, delta, nu, xi)))


def epsilon_pa(n, delta, nu, ell, sec: SecurityConfig) -> float:
    """Privacy-amplification failure probability for a key of ``ell`` bits."""
    r = sec.ec_efficiency * n * binary_entropy(delta)
    expo = -n * (1 - binary_entropy(delta + nu)) + r + sec.t + ell
    if expo > 2000:
        return math.inf
    return 0.5 * 2.0 ** (expo / 2)


def skl_upper_bound(n, delta, nu, eps_pe, sec: SecurityConfig) -> int | None:
    """Largest secure key length for given parameters, or None if inadmissible."""
    slack = sec.eps_qkd - sec.eps_cor - 2 * eps_pe
    if not slack > 0:
        return None
    r = sec.ec_efficiency * n * binary_entropy(delta)
    bound = math.log2(4 * slack**2) + n * (1 - binary_entropy(delta + nu)) - r - sec.t
    return max(0, math.floor(bound))


def search_grid(delta: float, sec: SecurityConfig):
    """Grid axes ``(beta, nu, xi)``; every point satisfies the trivial constraints.

    ``xi`` has shape ``(N, N)`` indexed by (nu, xi) position.
    """
    N = sec.grid_n
    frac = np.arange(1, N + 1) / (N + 1)
    beta = np.geomspace(sec.beta_min, 0.5, N)
    nu = (0.5 - delta) * frac
    xi = nu[:, None] * frac[None, :]
    return beta, nu, xi


def _best_in_chunk(m, delta, betas, nu, xi, sec):
    """Best (ell, beta_idx, nu_idx, xi_idx) over a contiguous slice of beta values."""
    k = np.floor(betas * m)[:, None, None]
    n = m - k
    nu3 = nu[None, :, None]
    xi3 = xi[None, :, :]
    eps_sq = _eps_pe_sq(m, k, n, delta, nu3, xi3)
    slack = sec.eps_qkd - sec.eps_cor - 2 * np.sqrt(eps_sq)
    h_d = _h2(delta) if delta > 0 else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = (np.log2(4 * slack**2) + n * (1 - _h2(delta + nu3))
                 - sec.ec_efficiency * n * h_d - sec.t)
    ok = (slack > 0) & (k >= 1) & (n >= 1)
    ell = np.where(ok, np.maximum(np.floor(bound), 0.0), -1.0)
    flat = int(np.argmax(ell))
    b, i, j = np.unravel_index(flat, ell.shape)
    return float(ell[b, i, j]), int(b), int(i), int(j)


def optimise_key_length(block: BlockStats, sec: SecurityConfig = SecurityConfig(),
                        workers: int = 1, delta: float | None = None) -> SklResult:
    """Maximise the key length over the (beta, nu, xi) grid.

    ``delta`` defaults to the block QBER. The result does not depend on
    ``workers``: chunks have a fixed size and the reduction prefers the
    larger key, then the smaller (beta, nu, xi).
    """
    m = int(block.m)
    delta = block.qber if delta is None else delta
    if m <= 1 or not 0 <= delta < 0.5:
        return SklResult(0, delta=delta, m=max(m, 0))
    beta, nu, xi = search_grid(delta, sec)
    starts = range(0, len(beta), BETA_CHUNK)
    job = lambda s0: _best_in_chunk(m, delta, beta[s0:s0 + BETA_CHUNK], nu, xi, sec)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(s0) for s0 in starts]
    best, where = -1.0, None
    for s0, (ell, b, i, j) in zip(starts, parts):
        if ell > best:
            best, where = ell, (s0 + b, i, j)
    if best < 0:
        return SklResult(0, delta=delta, m=m)
    b, i, j = where
    k = int(math.floor(beta[b] * m))
    n = m - k
    ell = int(best)
    e_pe = epsilon_pe(m, k, n, delta, nu[i], xi[i, j])
    e_pa = epsilon_pa(n, delta, nu[i], ell, sec)
    return SklResult(ell, float(beta[b]), float(nu[i]), float(xi[i, j]), delta,
                     k, n, m, e_pe, e_pa)


def _prefix_stats(counts: CountsProfile, mask=None):
    qber = counts.qber
    idx = np.arange(len(counts)) if mask is None else np.flatnonzero(mask)
    idx = idx[counts.D[idx] > 0]
    order = idx[np.argsort(qber[idx], kind="stable")]
    cum_d = np.cumsum(counts.D[order])
    cum_e = np.cumsum(counts.e[order])
    return order, cum_d, cum_e, qber


def build_block(counts: CountsProfile, delta: float, model: str = "weighted",
                mask=None) -> BlockStats:
    """Assemble the block admitted by QBER threshold ``delta``.

    Bins are taken in ascending instantaneous QBER. The weighted model admits
    the longest prefix whose pooled QBER stays at or below ``delta``; the max
    model admits every bin whose own QBER is at or below ``delta`` and reports
    the worst admitted bin QBER.
    """
    order, cum_d, cum_e, qber = _prefix_stats(counts, mask)
    if len(order) == 0:
        return BlockStats(0, 0.0, (), delta)
    if model == "weighted":
        ok = np.flatnonzero(cum_e / cum_d <= delta)
        count = int(ok[-1]) + 1 if len(ok) else 0
    elif model == "max":
        count = int(np.searchsorted(qber[order], delta, side="right"))
    else:
        raise ValueError(f"unknown threshold model {model!r}")
    if count == 0:
        return BlockStats(0, 0.0, (), delta)
    scale = 0.5 * counts.pair_rate * counts.bin_width
    m = int(math.floor(scale * cum_d[count - 1]))
    if model == "weighted":
        q = float(cum_e[count - 1] / cum_d[count - 1])
    else:
        q = float(qber[order[count - 1]])
    bins = tuple(sorted(int(i) for i in order[:count]))
    return BlockStats(m, q, bins, delta, float(scale * cum_e[count - 1]))


def qber_range(counts: CountsProfile, model: str = "weighted", mask=None) -> tuple[float, float]:
    """Smallest and largest achievable block QBER for the threshold scan."""
    order, cum_d, cum_e, qber = _prefix_stats(counts, mask)
    if len(order) == 0:
        return 0.0, 0.0
    if model == "weighted":
        pooled = cum_e / cum_d
        return float(pooled[0]), float(pooled[-1])
    return float(qber[order[0]]), float(qber[order[-1]])


def threshold_sweep(counts: CountsProfile, sec: SecurityConfig = SecurityConfig(),
                    n_thresholds: int = 32, model: str = "weighted", workers: int = 1,
                    mask=None) -> tuple[SklResult, SweepCurve]:
    """Scan QBER thresholds uniformly and keep the best key length."""
    lo, hi = qber_range(counts, model, mask)
    thresholds = np.linspace(lo, hi, n_thresholds) if hi > lo else np.array([hi])
    curve = SweepCurve(thresholds)
    seen: dict = {}
    for d in thresholds:
        block = build_block(counts, float(d), model, mask)
        # Neighbouring thresholds often admit the same bins; reuse the search.
        key = (block.m, block.qber)
        if key not in seen:
            seen[key] = optimise_key_length(block, sec, workers)
        curve.blocks.append(block)
        curve.results.append(seen[key])
    return curve.results[int(np.argmax(curve.ell))], curve
