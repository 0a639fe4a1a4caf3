"""Coarse/fine subdivision of the box.

The coarse cells have side ``c = (log n)^{A/d}``; each is cut into
``q_1^d`` subcubes of side ``(log n)^{theta A/d}``, each of those into
``q_2^d`` subcubes, and so on for ``s`` levels. A fine cell is addressed by
its global integer coordinates ``g`` in ``[0, Q)^d`` with
``Q = q_c * q_1 * ... * q_s``; the mixed-radix digits of ``g`` give the
enclosing cell at every level. Cells need not cover the box; points in the
uncovered margin are reported with fine id -1.

``paper_faithful`` mode derives every side from ``(n, A, theta)``;
``explicit_sides`` mode takes the coarse side and the per-level sides
directly, which is the only way to get nontrivial partitions at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np

from ..graph import SfpParams

MODES = ("paper_faithful", "explicit_sides")
_NEAR = 1e-7


class DegenerateRegimeError(ValueError):
    pass


def depth_for(gamma: float, theta: float) -> int:
    """Number of refinement levels, floor(log(1/(2 gamma)) / log theta)."""
    return math.floor(math.log(1.0 / (2.0 * gamma)) / math.log(theta))


@dataclass(frozen=True)
class PartitionSpec:
    A: float = 6.0
    theta: float = 0.9
    nu_s: Optional[float] = None
    eta: Optional[float] = None
    beta1: float = 0.1
    beta2: float = 3.0
    c2: float = 1.0
    c3: float = 1.0
    mode: str = "paper_faithful"
    coarse_side: Optional[float] = None
    level_sides: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not (self.beta1 >= 0 and self.beta2 > self.beta1):
            raise ValueError("need 0 <= beta1 < beta2")
        if not (self.c2 > 0 and self.c3 > 0):
            raise ValueError("c2 and c3 must be > 0")
        if self.mode == "explicit_sides":
            if self.coarse_side is None or not self.coarse_side > 0:
                raise ValueError("explicit_sides mode needs coarse_side > 0")
            prev = self.coarse_side
            for s in self.level_sides:
                if not 0 < s <= prev:
                    raise ValueError("level sides must be positive and nonincreasing from coarse_side")
                prev = s
            if self.nu_s is None or self.eta is None:
                raise ValueError("explicit_sides mode needs nu_s and eta")

    def depth(self, params: SfpParams) -> int:
        if self.mode == "explicit_sides":
            return len(self.level_sides)
        return depth_for(params.gamma, self.theta)

    def nu_p(self, params: SfpParams) -> float:
        """theta^s A (paper_faithful mode)."""
        return self.theta ** self.depth(params) * self.A

    def theta_interval(self, params: SfpParams):
        return max(2.0 / 3.0, params.alpha / (2 * params.d) + params.gamma / self.A), 1.0

    def nu_s_interval(self, params: SfpParams):
        return self.nu_p(params), (self.A - 1) / params.gamma

    def eta_interval(self, params: SfpParams, nu_s: float):
        return params.alpha * nu_s / params.d, (self.A - 1) / (params.tau - 1)

    def resolved(self, params: SfpParams) -> "PartitionSpec":
        """Validate against ``params``; unset nu_s / eta become interval midpoints."""
        if self.mode == "explicit_sides":
            return self
        g, a, d = params.gamma, params.alpha, params.d
        if not a < 2 * d:
            raise ValueError("paper_faithful mode needs alpha < 2d")
        if not self.A > 2 * g / (2 - a / d):
            raise ValueError(f"A must exceed 2 gamma / (2 - alpha/d) = {2 * g / (2 - a / d):.6g}")
        lo, hi = self.theta_interval(params)
        if not lo < self.theta < hi:
            raise ValueError(f"theta must lie in ({lo:.6g}, 1)")
        if self.depth(params) < 0:
            raise ValueError("refinement depth s is negative (gamma < 1/2)")
        lo, hi = self.nu_s_interval(params)
        nu_s = (lo + hi) / 2 if self.nu_s is None else self.nu_s
        if not lo < nu_s < hi:
            raise ValueError(f"nu_s must lie in ({lo:.6g}, {hi:.6g})")
        lo, hi = self.eta_interval(params, nu_s)
        eta = (lo + hi) / 2 if self.eta is None else self.eta
        if not lo < eta < hi:
            raise ValueError(f"eta must lie in ({lo:.6g}, {hi:.6g})")
        return replace(self, nu_s=nu_s, eta=eta)

    def to_dict(self) -> dict:
        return {"A": self.A, "theta": self.theta, "nu_s": self.nu_s, "eta": self.eta,
                "beta1": self.beta1, "beta2": self.beta2, "c2": self.c2, "c3": self.c3,
                "mode": self.mode, "coarse_side": self.coarse_side,
                "level_sides": list(self.level_sides)}


def faithful_counts(volume, d: int, A: float, theta: float, s: int):
    """(q_c, [q_1..q_s]) per-dimension counts from the floor formulas.

    ``volume`` may be an int for exact huge n; evaluation uses enough digits
    that the floors are decided exactly for any lattice used in practice.
    """
    digits = max(1, int(mpmath.log10(mpmath.mpf(volume))) + 1)
    with mpmath.workdps(60 + digits):
        n = mpmath.mpf(volume)
        ln = mpmath.log(n)
        if ln <= 1:
            raise DegenerateRegimeError("asymptotic regime unreachable at this n (log n <= 1)")
        A_ = mpmath.mpf(A)
        th = mpmath.mpf(theta)
        if mpmath.power(ln, A_ / d) > mpmath.power(n, mpmath.mpf(1) / d):
            raise DegenerateRegimeError("asymptotic regime unreachable at this n: "
                                        "(log n)^{A/d} > n^{1/d}; use explicit_sides mode")
        q_c = int(mpmath.floor(mpmath.power(n, mpmath.mpf(1) / d) / mpmath.power(ln, A_ / d)))
        qs = [int(mpmath.floor(mpmath.power(ln, (th ** (k - 1) - th ** k) * A_ / d)))
              for k in range(1, s + 1)]
    return q_c, qs


def snake_order(q: int, d: int) -> np.ndarray:
    """All of ``{0..q-1}^d`` ordered so consecutive cells share a face, starting at 0."""
    if d == 1:
        return np.arange(q, dtype=np.int64)[:, None]
    sub = snake_order(q, d - 1)
    blocks = []
    for k in range(q):
        part = sub if k % 2 == 0 else sub[::-1]
        blocks.append(np.hstack([part, np.full((part.shape[0], 1), k, np.int64)]))
    return np.vstack(blocks)


@dataclass
class BoxPartition:
    params: SfpParams
    spec: PartitionSpec
    log_n: float
    q_c: int
    q_levels: list
    coarse_side: float
    level_sides: list
    nu_p: float
    _snake: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def s(self) -> int:
        return len(self.q_levels)

    @property
    def m_c(self) -> int:
        return self.q_c ** self.d

    @property
    def m_levels(self) -> list:
        return [q ** self.d for q in self.q_levels]

    @property
    def m_f(self) -> int:
        out = self.m_c
        for m in self.m_levels:
            out *= m
        return out

    @property
    def fine_per_dim(self) -> int:
        out = self.q_c
        for q in self.q_levels:
            out *= q
        return out

    @property
    def fine_side(self) -> float:
        return self.level_sides[-1] if self.level_sides else self.coarse_side

    @property
    def fine_scale(self) -> float:
        """(log n)^{nu_p}: the nominal fine-cell volume."""
        return self.log_n ** self.nu_p

    @property
    def snake(self) -> np.ndarray:
        """Coarse multi-indices in chain order B_1, B_2, ..."""
        if self._snake is None:
            self._snake = snake_order(self.q_c, self.d)
        return self._snake

    def snake_position(self) -> np.ndarray:
        """Map from raveled coarse index to position in the chain."""
        flat = np.ravel_multi_index(tuple(self.snake.T), (self.q_c,) * self.d)
        pos = np.empty(self.m_c, np.int64)
        pos[flat] = np.arange(self.m_c)
        return pos

    # -- geometry --------------------------------------------------------

    def _sides_exact(self):
        return [Fraction(self.coarse_side)] + [Fraction(s) for s in self.level_sides]

    def _radices(self):
        return [self.q_c] + list(self.q_levels)

    def _locate_exact(self, x: float):
        """Per-coordinate fine index by rational arithmetic, or -1 in the margin."""
        r = Fraction(x)
        g = 0
        for side, q in zip(self._sides_exact(), self._radices()):
            idx = math.floor(r / side)
            if idx >= q or idx < 0:
                return -1
            r -= idx * side
            g = g * q + idx
        return g

    def locate(self, positions: np.ndarray) -> np.ndarray:
        """Global fine coordinates (n, d); rows with any -1 lie in the margin."""
        pos = np.asarray(positions, float)
        n = pos.shape[0]
        out = np.zeros(pos.shape, np.int64)
        margin = np.zeros(pos.shape, bool)
        near = np.zeros(pos.shape, bool)
        r = pos.copy()
        sides = [self.coarse_side] + list(self.level_sides)
        for side, q in zip(sides, self._radices()):
            ratio = r / side
            idx = np.floor(ratio)
            near |= np.abs(ratio - np.round(ratio)) < _NEAR
            margin |= idx >= q
            idx = np.clip(idx, 0, q - 1)
            r = r - idx * side
            out = out * q + idx.astype(np.int64)
        out[margin] = -1
        for i, k in zip(*np.nonzero(near)):
            out[i, k] = self._locate_exact(float(pos[i, k]))
        if n:
            bad = (out < 0).any(axis=1)
            out[bad] = -1
        return out

    def fine_ids(self, positions: np.ndarray) -> np.ndarray:
        g = self.locate(positions)
        ids = np.full(g.shape[0], -1, np.int64)
        ok = g[:, 0] >= 0 if g.shape[0] else np.zeros(0, bool)
        if ok.any():
            ids[ok] = np.ravel_multi_index(tuple(g[ok].T), (self.fine_per_dim,) * self.d)
        return ids

    def coarse_of_fine(self, fine_coords: np.ndarray) -> np.ndarray:
        """Coarse multi-index of fine global coordinates."""
        div = self.fine_per_dim // self.q_c
        return np.asarray(fine_coords) // div

    def coarse_ids(self, positions: np.ndarray) -> np.ndarray:
        """Raveled coarse index per point, -1 outside the coarse region.

        Points in a coarse cell but outside its fine cells still count.
        """
        pos = np.asarray(positions, float)
        idx = np.floor(pos / self.coarse_side).astype(np.int64)
        ratio = pos / self.coarse_side
        near = np.abs(ratio - np.round(ratio)) < _NEAR
        side = Fraction(self.coarse_side)
        for i, k in zip(*np.nonzero(near)):
            idx[i, k] = math.floor(Fraction(float(pos[i, k])) / side)
        out = np.full(pos.shape[0], -1, np.int64)
        ok = (idx < self.q_c).all(axis=1) & (idx >= 0).all(axis=1)
        if ok.any():
            out[ok] = np.ravel_multi_index(tuple(idx[ok].T), (self.q_c,) * self.d)
        return out

    def fine_bounds(self, g: Sequence[int]):
        """Exact per-dimension bounds [lo, hi) of the fine cell at coordinates ``g``."""
        sides = self._sides_exact()
        radices = self._radices()
        bounds = []
        for gk in g:
            digits = []
            rem = int(gk)
            for q in reversed(radices):
                digits.append(rem % q)
                rem //= q
            digits.reverse()
            lo = sum((dig * sd for dig, sd in zip(digits, sides)), Fraction(0))
            bounds.append((lo, lo + sides[-1]))
        return bounds

    def color(self, g) -> np.ndarray:
        """Chessboard colour (0 red, 1 blue) from global fine coordinates."""
        return np.asarray(g).sum(axis=-1) % 2

    def to_dict(self) -> dict:
        return {"log_n": self.log_n, "s": self.s, "nu_p": self.nu_p, "m_c": self.m_c,
                "m_levels": self.m_levels, "m_f": self.m_f, "coarse_side": self.coarse_side,
                "level_sides": list(self.level_sides), "fine_scale": self.fine_scale}


def build_partition(params: SfpParams, spec: PartitionSpec) -> BoxPartition:
    d = params.d
    log_n = math.log(params.volume)
    if spec.mode == "paper_faithful":
        spec = spec.resolved(params)
        s = spec.depth(params)
        q_c, qs = faithful_counts(params.volume, d, spec.A, spec.theta, s)
        if q_c < 1:
            raise DegenerateRegimeError("asymptotic regime unreachable at this n: m_c = 0")
        sides = [log_n ** (spec.theta ** k * spec.A / d) for k in range(s + 1)]
        return BoxPartition(params, spec, log_n, q_c, qs, sides[0], sides[1:], spec.nu_p(params))
    side = Fraction(params.side)
    sides = [Fraction(spec.coarse_side)] + [Fraction(x) for x in spec.level_sides]
    q_c = math.floor(side / sides[0])
    qs = [math.floor(a / b) for a, b in zip(sides, sides[1:])]
    if q_c < 1 or min(qs, default=1) < 1:
        raise DegenerateRegimeError("explicit sides leave an empty subdivision")
    if not log_n > 1:
        raise DegenerateRegimeError("explicit_sides mode needs log n > 1")
    fine = spec.level_sides[-1] if spec.level_sides else spec.coarse_side
    nu_p = d * math.log(fine) / math.log(log_n)
    return BoxPartition(params, spec, log_n, q_c, qs, float(spec.coarse_side),
                        [float(x) for x in spec.level_sides], nu_p)
