"""Fixed-duration flight compression for free segments of the walk.

A walker `room` sites away from every occupied point cannot interact with
the aggregate until its path leaves the surrounding open interval, and a
mean-zero walk needs ~room^2 steps to do that.  Simulating those steps one
at a time is hopeless at launch offsets of 4*diam + 1024, so free segments
advance through precomputed "flights": samples of (displacement, path min,
path max) over dyadic durations of the step law truncated at a cutoff C.
A flight is sized so its excursion is ~5 sigma below the free room, taken
whole when its min/max certify the path stayed inside the interval, and
otherwise discarded for fresh smaller flights (discarding costs a
~P(5 sigma) per-block bias, measured by the A/B suite).  Steps larger than
C are removed from the truncated law and re-injected exactly as point
events at Geometric(p_C) times: the one-big-jump channel, which drives
heavy-tailed hull growth and deep overshoots, is simulated exactly at
every scale, including jumps that land on the aggregate from far away.

Flight tables compose exactly (a 2m-flight is two independent m-flights),
so construction needs only the 64-step base case and is fast.  Tables are
empirical and resampled, so distinct draws may share entries; walker tests
check A/B equivalence against raw simulation.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .steps import StepDistribution, sample_steps, survival

__all__ = [
    "FlightTables",
    "StepPump",
    "build_tables",
    "get_tables",
    "advance_free",
    "first_passage_below",
    "FreeSegment",
]

BASE_LOG2 = 6  # 64-step base flights
BASE = 1 << BASE_LOG2
RAW_ROOM = 64  # below this free room, step raw with the full law
CUTOFFS = tuple(4**k for k in range(3, 9))  # 64 .. 65536
DEFAULT_SAMPLES = 16384
_MAX_ROOM_LOG2 = 27  # free rooms up to ~1.3e8 sites
_SIZING_SIGMAS = 5.0
_NO_CLOCK = 1 << 62
NO_WALL = 1 << 60  # one-sided intervals: walls beyond any reachable position


def _top_level(cutoff: int) -> int:
    """Highest duration exponent a band needs: ~(largest room / sigma)^2."""
    if cutoff == CUTOFFS[-1]:
        room_log2 = _MAX_ROOM_LOG2
    else:
        room_log2 = int(math.log2(cutoff)) + 2  # band serves rooms < 4*C
    return 2 * room_log2 - BASE_LOG2


@dataclass
class FlightTables:
    """Per-cutoff dyadic flight samples for one step distribution.

    disp/lo/hi[c][k] hold M draws of (displacement, running min, running
    max) over 64 * 2^k steps of the law truncated at |step| <= c.
    big_prob[c] is the exact per-step probability of |step| > c.
    """

    dist_key: str
    samples: int
    disp: dict[int, list[np.ndarray]]
    lo: dict[int, list[np.ndarray]]
    hi: dict[int, list[np.ndarray]]
    big_prob: dict[int, float]
    sigma: dict[int, float]  # per-band per-step standard deviation
    meta: dict = field(default_factory=dict)

    def cutoff_for_room(self, room: int) -> int:
        """Largest tabulated cutoff <= room (rooms below RAW_ROOM are raw).

        Steps above the cutoff run as exact point events; steps below it
        live inside flights, whose wall checks force any wall-touching
        stretch to be re-walked raw, so wall hits stay exact either way.
        """
        c = CUTOFFS[0]
        for cand in CUTOFFS[1:]:
            if cand <= room:
                c = cand
            else:
                break
        return c


def _seed_for(dist_key: str, samples: int) -> np.random.SeedSequence:
    digest = hashlib.sha256(f"flights-v2|{dist_key}|{samples}".encode()).digest()
    return np.random.SeedSequence(list(digest[:16]))


def sample_truncated(
    dist: StepDistribution, rng: np.random.Generator, cutoff: int, n: int
) -> np.ndarray:
    """n steps of the law conditioned on |xi| <= cutoff (exact, by rejection)."""
    out = sample_steps(dist, rng, n)
    while True:
        bad = np.abs(out) > cutoff
        k = int(np.count_nonzero(bad))
        if k == 0:
            return out
        out[bad] = sample_steps(dist, rng, k)


def sample_big_steps(
    dist: StepDistribution, rng: np.random.Generator, cutoff: int, n: int
) -> np.ndarray:
    """n steps of the law conditioned on |xi| > cutoff (exact)."""
    mags = _tail_magnitudes(dist, rng, cutoff, n)
    signs = (rng.integers(0, 2, size=n, dtype=np.int64) << 1) - 1
    return signs * mags


def _tail_magnitudes(
    dist: StepDistribution, rng: np.random.Generator, cutoff: int, n: int
) -> np.ndarray:
    """|xi| conditioned on |xi| > cutoff."""
    head_top = int(dist.tail_cutoff)
    if cutoff >= head_top:
        if dist.kind != "zeta":
            raise ValueError("bounded law has no mass beyond its support")
        return _zeta_magnitudes_above(dist, rng, cutoff, n)
    cum = dist._cum_abs
    below = float(cum[cutoff - 1]) if cutoff >= 1 else 0.0
    head_mass = float(cum[-1]) - below
    total = head_mass + dist.tail_constant
    u = rng.random(n) * total
    out = np.empty(n, dtype=np.int64)
    in_head = u < head_mass
    k = int(np.count_nonzero(in_head))
    if k:
        vals = np.searchsorted(cum, below + u[in_head], side="right") + 1
        out[in_head] = np.clip(vals.astype(np.int64), cutoff + 1, head_top)
    if n - k:
        out[~in_head] = _zeta_magnitudes_above(dist, rng, head_top, n - k)
    return out


def _zeta_magnitudes_above(
    dist: StepDistribution, rng: np.random.Generator, floor: int, n: int
) -> np.ndarray:
    """Exact zeta-law magnitudes conditioned on |xi| > floor (Pareto rejection)."""
    alpha = dist.alpha
    m = float(floor + 1)
    out = np.empty(n, dtype=np.int64)
    filled = 0
    big = float(2**55)  # keeps positions far from wall sentinels
    while filled < n:
        todo = n - filled
        x = np.minimum(m * rng.random(todo) ** (-1.0 / alpha), big)
        k = np.floor(x)
        prop = m**alpha * (k**-alpha - (k + 1.0) ** -alpha)
        envelope = ((m + 1.0) / m) ** (1.0 + alpha) / (alpha * m**alpha)
        acc = k ** (-1.0 - alpha) / (envelope * prop)
        keep = rng.random(todo) < acc
        kk = k[keep].astype(np.int64)
        out[filled : filled + kk.size] = kk
        filled += kk.size
    return out


def _symmetrized(d: np.ndarray, l: np.ndarray, h: np.ndarray):
    """Close a flight set under path negation (exact for symmetric laws).

    Keeps every table's empirical mean displacement exactly zero; without
    this, dyadic composition doubles the base table's sampling-noise mean
    at each level and the walk inherits an exponentially amplified drift.
    """
    return (
        np.concatenate([d, -d]),
        np.concatenate([l, -h]),
        np.concatenate([h, -l]),
    )


def build_tables(dist: StepDistribution, samples: int = DEFAULT_SAMPLES) -> FlightTables:
    """Build flight tables; deterministic given the distribution identity."""
    rng = np.random.default_rng(_seed_for(dist.key(), samples))
    half = samples // 2
    disp: dict[int, list[np.ndarray]] = {}
    lo: dict[int, list[np.ndarray]] = {}
    hi: dict[int, list[np.ndarray]] = {}
    big_prob: dict[int, float] = {}
    sigma: dict[int, float] = {}
    for c in CUTOFFS:
        big_prob[c] = 2.0 * survival(dist, c) if c < 2**62 else 0.0
        s = sample_truncated(dist, rng, c, half * BASE).reshape(half, BASE)
        paths = np.cumsum(s, axis=1)
        d = [None]
        d[0], l0, h0 = _symmetrized(paths[:, -1], paths.min(axis=1), paths.max(axis=1))
        l = [l0]
        h = [h0]
        sigma[c] = max(float(s.std()), 1e-9)
        for _ in range(_top_level(c)):
            i = rng.integers(0, samples, size=half)
            j = rng.integers(0, samples, size=half)
            d1, l1, h1 = d[-1][i], l[-1][i], h[-1][i]
            d2, l2, h2 = d[-1][j], l[-1][j], h[-1][j]
            dd, ll, hh = _symmetrized(
                d1 + d2, np.minimum(l1, d1 + l2), np.maximum(h1, d1 + h2)
            )
            d.append(dd)
            l.append(ll)
            h.append(hh)
        disp[c], lo[c], hi[c] = d, l, h
    return FlightTables(
        dist_key=dist.key(),
        samples=samples,
        disp=disp,
        lo=lo,
        hi=hi,
        big_prob=big_prob,
        sigma=sigma,
    )


_CACHE: dict[tuple[str, int], FlightTables] = {}


def get_tables(dist: StepDistribution, samples: int = DEFAULT_SAMPLES) -> FlightTables:
    key = (dist.key(), samples)
    tab = _CACHE.get(key)
    if tab is None:
        tab = build_tables(dist, samples)
        _CACHE[key] = tab
    return tab


def _geometric(rng: np.random.Generator, p: float) -> int:
    """Truncated steps before the next big jump."""
    if p <= 1e-18:
        return _NO_CLOCK
    u = max(rng.random(), 1e-300)
    g = int(math.log(u) / math.log1p(-p))
    return min(g, _NO_CLOCK)


class StepPump:
    """Buffered step supply bound to one RNG stream.

    Amortizes numpy call overhead across many small requests; consumption
    order is deterministic, so runs stay reproducible.  Keys are step-law
    variants: None for the full law, a cutoff for the truncated law.
    """

    BUF = 8192

    def __init__(
        self,
        dist: StepDistribution,
        rng: np.random.Generator,
        tables: FlightTables | None = None,
    ):
        self.dist = dist
        self.rng = rng
        self.tables = tables
        self._bufs: dict[int | None, np.ndarray] = {}
        self._at: dict[int | None, int] = {}
        self._idx: np.ndarray = np.empty(0, dtype=np.int64)
        self._idx_at = 0
        self._big: dict[int, np.ndarray] = {}
        self._big_at: dict[int, int] = {}

    def _fill(self, key: int | None) -> None:
        if key is None:
            self._bufs[key] = sample_steps(self.dist, self.rng, self.BUF)
        else:
            self._bufs[key] = sample_truncated(self.dist, self.rng, key, self.BUF)
        self._at[key] = 0

    def take(self, key: int | None, n: int) -> np.ndarray:
        """n i.i.d. steps of the keyed law (read-only view when buffered)."""
        if n > self.BUF:
            if key is None:
                return sample_steps(self.dist, self.rng, n)
            return sample_truncated(self.dist, self.rng, key, n)
        at = self._at.get(key)
        if at is None or at + n > self.BUF:
            self._fill(key)
            at = 0
        self._at[key] = at + n
        return self._bufs[key][at : at + n]

    def flight_index(self) -> int:
        if self._idx_at >= self._idx.size:
            self._idx = self.rng.integers(0, self.tables.samples, size=512)
            self._idx_at = 0
        v = int(self._idx[self._idx_at])
        self._idx_at += 1
        return v

    def big_step(self, cutoff: int) -> int:
        at = self._big_at.get(cutoff)
        if at is None or at >= 64:
            self._big[cutoff] = sample_big_steps(self.dist, self.rng, cutoff, 64)
            at = 0
        self._big_at[cutoff] = at + 1
        return int(self._big[cutoff][at])


@dataclass
class FreeSegment:
    """Outcome of advancing through an occupancy-free open interval.

    The walk stood at `prev` and stepped to `exit` - the first position at
    or beyond a wall (callers decide whether that proposal glues).  lo/hi
    bound every position visited from the starting one through `prev`,
    inclusive.  `steps` counts true walk steps including the exit step;
    `work` counts simulation effort (raw steps, flights, big jumps) and is
    what budgets meter.  When `exited` is False the work allowance ran out
    with the walk at `prev`.
    """

    prev: int
    exit: int
    steps: int
    work: int
    lo: int
    hi: int
    exited: bool
    flights: int = 0
    big_jumps: int = 0
    refinements: int = 0


def _scan_raw(path: np.ndarray, left: int, right: int) -> int:
    """Index of the first position outside the open interval, or -1."""
    out = (path <= left) | (path >= right)
    return int(np.argmax(out)) if out.any() else -1


def advance_free(
    pump: StepPump,
    pos: int,
    left: int,
    right: int,
    max_work: int,
) -> FreeSegment:
    """Advance the free walk from pos until it first reaches a position
    <= left or >= right, exactly in law.

    Use +-NO_WALL for one-sided intervals.  The caller guarantees no
    occupied site lies strictly between the walls.
    """
    dist, rng, tables = pump.dist, pump.rng, pump.tables
    lo = hi = pos
    steps = 0
    work = 0
    flights = big_jumps = refinements = 0
    raw_block = 128

    def _finish(prev: int, nxt: int) -> FreeSegment:
        return FreeSegment(
            prev, nxt, steps, work, lo, hi, True, flights, big_jumps, refinements
        )

    while True:
        room_l = pos - left
        room_r = right - pos
        room = room_l if room_l < room_r else room_r
        if room <= 0:
            raise AssertionError("walker started on or beyond a wall")

        if tables is None or room < RAW_ROOM:
            # raw blocks with the full step law
            s = pump.take(None, raw_block)
            path = pos + np.cumsum(s)
            k = _scan_raw(path, left, right)
            if k >= 0:
                prev = int(path[k - 1]) if k > 0 else pos
                if k > 0:
                    lo = min(lo, int(path[:k].min()))
                    hi = max(hi, int(path[:k].max()))
                steps += k + 1
                work += k + 1
                return _finish(prev, int(path[k]))
            lo = min(lo, int(path.min()))
            hi = max(hi, int(path.max()))
            pos = int(path[-1])
            steps += raw_block
            work += raw_block
            raw_block = min(raw_block * 2, 4096)
            if work > max_work:
                return FreeSegment(
                    pos, pos, steps, work, lo, hi, False, flights, big_jumps, refinements
                )
            continue

        raw_block = 128
        c = tables.cutoff_for_room(int(room))
        ci = CUTOFFS.index(c)
        band_hi = CUTOFFS[ci + 1] if ci + 1 < len(CUTOFFS) else NO_WALL
        clock = _geometric(rng, tables.big_prob[c])
        d_tab, l_tab, h_tab = tables.disp[c], tables.lo[c], tables.hi[c]
        top = len(d_tab) - 1
        sig = tables.sigma[c]

        while True:
            room_l = pos - left
            room_r = right - pos
            room = room_l if room_l < room_r else room_r
            if room < c or room >= band_hi:
                break  # reband; a fresh clock is exact by memorylessness

            if clock == 0:
                # the big jump fires now, from an exactly known position
                nxt = pos + pump.big_step(c)
                steps += 1
                work += 1
                big_jumps += 1
                if nxt <= left or nxt >= right:
                    return _finish(pos, nxt)
                pos = nxt
                lo = min(lo, pos)
                hi = max(hi, pos)
                break

            if clock < BASE:
                n = clock
            else:
                n = 0
            if n:
                # serve out the clock raw with the truncated law
                s = pump.take(c, n)
                path = pos + np.cumsum(s)
                k = _scan_raw(path, left, right)
                if k >= 0:
                    prev = int(path[k - 1]) if k > 0 else pos
                    if k > 0:
                        lo = min(lo, int(path[:k].min()))
                        hi = max(hi, int(path[:k].max()))
                    steps += k + 1
                    work += k + 1
                    return _finish(prev, int(path[k]))
                lo = min(lo, int(path.min()))
                hi = max(hi, int(path.max()))
                pos = int(path[-1])
                steps += n
                work += n
                clock = 0
                continue

            # flight sizing: excursion ~ _SIZING_SIGMAS * sigma * sqrt(m) < room
            safe = room / (_SIZING_SIGMAS * sig)
            lvl = int(safe * safe).bit_length() - 1 - BASE_LOG2
            cap = (clock >> BASE_LOG2).bit_length() - 1
            if lvl > top:
                lvl = top
            if lvl > cap:
                lvl = cap
            if lvl < 0:
                lvl = 0
            took = False
            while lvl >= 0:
                j = pump.flight_index()
                mn = int(l_tab[lvl][j])
                mx = int(h_tab[lvl][j])
                if pos + mn > left and pos + mx < right:
                    lo = min(lo, pos + mn)
                    hi = max(hi, pos + mx)
                    pos += int(d_tab[lvl][j])
                    dur = BASE << lvl
                    steps += dur
                    work += 1
                    clock -= dur
                    flights += 1
                    took = True
                    break
                lvl -= 1
                refinements += 1
            if not took:
                # even a base flight may cross: walk 64 truncated steps raw
                s = pump.take(c, BASE)
                path = pos + np.cumsum(s)
                k = _scan_raw(path, left, right)
                if k >= 0:
                    prev = int(path[k - 1]) if k > 0 else pos
                    if k > 0:
                        lo = min(lo, int(path[:k].min()))
                        hi = max(hi, int(path[:k].max()))
                    steps += k + 1
                    work += k + 1
                    return _finish(prev, int(path[k]))
                lo = min(lo, int(path.min()))
                hi = max(hi, int(path.max()))
                pos = int(path[-1])
                steps += BASE
                work += BASE
                clock -= BASE
            if work > max_work:
                return FreeSegment(
                    pos, pos, steps, work, lo, hi, False, flights, big_jumps, refinements
                )


def first_passage_below(
    dist: StepDistribution,
    rng: np.random.Generator,
    tables: FlightTables | None,
    start: int,
    level: int,
    max_work: int = 10**12,
    pump: StepPump | None = None,
) -> FreeSegment:
    """First passage of the free walk from start to a position <= level.

    The returned segment's exit is the entry position (level minus the
    overshoot); prev is where the crossing jump was made from.
    """
    if start <= level:
        raise ValueError("start must lie above the level")
    if pump is None:
        pump = StepPump(dist, rng, tables)
    return advance_free(pump, start, level, NO_WALL, max_work)
