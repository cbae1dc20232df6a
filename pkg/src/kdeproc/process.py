"""Simulation of the two kernel predictive processes with full genealogy.

Both processes share the generative skeleton: at step n an ancestor index is
drawn uniformly from {1..n}, a kernel variate is drawn, and the new point is
the ancestor plus a scaled variate.  They differ only in which bandwidth
scales the variate:

* ``kde``        -- the current bandwidth h_n (every component of the
  predictive mixture is rescaled to h_n at every step);
* ``recursive``  -- the ancestor's birth bandwidth h_{M_n} (each point keeps
  the bandwidth it was born with, never updated).

Trajectories record ancestors, kernel draws and the bandwidth actually
applied, so any point can be reconstructed independently by walking its
ancestry, and the exact finite-mixture form of the predictive law is
available at every time index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bandwidth import BandwidthSchedule
from .errors import MissingGenealogy, NonFiniteInput, PrefixPointHasNoGenealogy
from .kernels import KernelSpec
from .streams import DrawStreams

FLAVORS = ("kde", "recursive")


@dataclass(frozen=True)
class Trajectory:
    """A realized path with its complete generative record.

    Point index p and step index n are 1-based as in the recursions: step n
    consumes the state of length n and emits point p = n + 1.  Array slot
    ``n - 1`` of the genealogy arrays belongs to step n; slots covering
    injected data points hold 0 / NaN sentinels.
    """

    flavor: str
    points: np.ndarray        # (N, d) float
    ancestors: np.ndarray     # (N-1,) int64, 1-based ancestor index, 0 = no record
    kernel_draws: np.ndarray  # (N-1, d) float, NaN rows where no record
    steps_h: np.ndarray       # (N-1,) float, bandwidth applied, NaN where no record
    seed_prefix_len: int      # number of leading points injected as observed data

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def root_bound(self) -> int:
        """Largest 1-based index with no generative record."""
        return max(1, self.seed_prefix_len)


@dataclass(frozen=True)
class PredictiveMixture:
    """Exact uniform-weight mixture form of the predictive law at some time.

    Component k is the kernel translated to ``centers[k]`` and scaled by
    ``scales[k]``; every component has weight 1/n.
    """

    centers: np.ndarray  # (n, d)
    scales: np.ndarray   # (n,)
    kernel: KernelSpec

    @property
    def n_components(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def prob(self, lo, hi) -> float:
        """Probability of the axis-aligned box [lo, hi]; sides may be +-inf."""
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.dim,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.dim,))
        if np.any(lo > hi):
            raise ValueError("box must satisfy lo <= hi per coordinate")
        s = self.scales[:, None]
        upper = self.kernel.cdf1((hi[None, :] - self.centers) / s)
        lower = self.kernel.cdf1((lo[None, :] - self.centers) / s)
        per_component = np.prod(upper - lower, axis=1)
        return float(np.mean(per_component))

    def cf(self, t) -> complex:
        """Mixture characteristic function at t."""
        t = np.broadcast_to(np.asarray(t, dtype=float), (self.dim,))
        vals = np.exp(1j * (self.centers @ t)) * self.kernel.cf_scaled(t, self.scales)
        # Componentwise means: numpy's complex/real division can drop an ulp,
        # and the value at t = 0 must be exactly 1.
        return complex(np.mean(vals.real) + 1j * np.mean(vals.imag))

    def cdf(self, x) -> np.ndarray:
        """Univariate mixture CDF, vectorized over x (dimension 1 only)."""
        if self.dim != 1:
            raise ValueError("cdf is only defined for dimension 1")
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.centers[:, 0]) / self.scales
        return np.mean(self.kernel.cdf1(z), axis=-1)

    def mean(self) -> np.ndarray:
        """Exact mixture mean: average center plus average scale times E[Y]."""
        return self.centers.mean(axis=0) + self.scales.mean() * self.kernel.mean_vector()

    def sample(self, rng, size: int) -> np.ndarray:
        """iid draws from the mixture, shape (size, d)."""
        idx = rng.integers(0, self.n_components, size=size)
        y = self.kernel.sample(rng, size=size)
        return self.centers[idx] + self.scales[idx, None] * y

    def quantile(self, q: float, tol: float = 1e-10) -> float:
        """Univariate quantile by bisection on the mixture CDF."""
        if self.dim != 1:
            raise ValueError("quantile is only defined for dimension 1")
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), got {q}")
        span = 10.0 * float(np.max(self.scales)) + 1.0
        lo = float(np.min(self.centers)) - span
        hi = float(np.max(self.centers)) + span
        while self.cdf(lo) > q:
            lo -= span
            span *= 2.0
        while self.cdf(hi) < q:
            hi += span
            span *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if hi - lo < tol * (1.0 + abs(mid)):
                break
            if float(self.cdf(mid)) < q:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


# ------------------------------------------------------------------ building


def _as_prefix(data_prefix, dim: int | None) -> np.ndarray:
    pts = np.asarray(data_prefix, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("data prefix must be a non-empty sequence of points")
    if dim is not None and pts.shape[1] != dim:
        raise ValueError(f"data prefix has dimension {pts.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(pts)):
        raise NonFiniteInput("data prefix contains NaN or infinite coordinates")
    return pts


def init_trajectory(flavor: str, data_prefix=None, dim: int | None = None) -> Trajectory:
    """Fresh trajectory: either the conventional single origin point, or the
    observed data injected as the leading points (replacing the convention).

    The dimension is inferred from the data when given; ``dim`` pins it
    explicitly (default 1 for the data-free start)."""
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    if data_prefix is None:
        dim = 1 if dim is None else dim
        points = np.zeros((1, dim))
        seed_len = 0
    else:
        points = _as_prefix(data_prefix, dim)
        dim = points.shape[1]
        seed_len = points.shape[0]
    n = points.shape[0]
    return Trajectory(
        flavor=flavor,
        points=points,
        ancestors=np.zeros(n - 1, dtype=np.int64),
        kernel_draws=np.full((n - 1, dim), np.nan),
        steps_h=np.full(n - 1, np.nan),
        seed_prefix_len=seed_len,
    )


def draw_next(
    traj: Trajectory,
    schedule: BandwidthSchedule,
    kernel: KernelSpec,
    streams: DrawStreams | None = None,
    forced_ancestor: int | None = None,
    forced_draw=None,
):
    """One generative step: returns (new_point, ancestor, kernel_draw, h_applied)."""
    n = len(traj)
    if forced_ancestor is not None:
        m = int(forced_ancestor)
        if not 1 <= m <= n:
            raise ValueError(f"ancestor must be in [1, {n}], got {m}")
    else:
        m = int(streams.ancestors.integers(1, n + 1))
    if forced_draw is not None:
        y = np.broadcast_to(np.asarray(forced_draw, dtype=float), (traj.dim,)).copy()
    else:
        y = kernel.sample(streams.kernel)
    h = schedule.at(n) if traj.flavor == "kde" else schedule.at(m)
    point = traj.points[m - 1] + h * y
    return point, m, y, h


def step(
    traj: Trajectory,
    schedule: BandwidthSchedule,
    kernel: KernelSpec,
    streams: DrawStreams | None = None,
    forced_ancestor: int | None = None,
    forced_draw=None,
) -> Trajectory:
    """Extend an immutable trajectory by one point (copying; use
    :func:`simulate` to build long paths in one pass)."""
    point, m, y, h = draw_next(traj, schedule, kernel, streams, forced_ancestor, forced_draw)
    return Trajectory(
        flavor=traj.flavor,
        points=np.vstack([traj.points, point[None, :]]),
        ancestors=np.append(traj.ancestors, np.int64(m)),
        kernel_draws=np.vstack([traj.kernel_draws, y[None, :]]),
        steps_h=np.append(traj.steps_h, h),
        seed_prefix_len=traj.seed_prefix_len,
    )


def simulate(
    flavor: str,
    schedule: BandwidthSchedule,
    kernel: KernelSpec,
    length: int,
    streams: DrawStreams | None = None,
    data_prefix=None,
    forced_ancestors=None,
    forced_draws=None,
) -> Trajectory:
    """Build a trajectory of ``length`` points in one pass.

    Ancestor indices and kernel variates for all steps are drawn up front
    (they do not depend on realized values), then the points are accumulated
    through the sequential recurrence.  ``forced_ancestors`` / ``forced_draws``
    replace the corresponding random draws for deterministic replay.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    d = kernel.dim
    if data_prefix is None:
        prefix = np.zeros((1, d))
        seed_len = 0
    else:
        prefix = _as_prefix(data_prefix, d)
        seed_len = prefix.shape[0]
    s = prefix.shape[0]
    if length < s:
        raise ValueError(f"length {length} shorter than the prefix ({s} points)")
    count = length - s
    step_idx = np.arange(s, length, dtype=np.int64)  # 1-based step indices

    if forced_ancestors is not None:
        anc = np.asarray(forced_ancestors, dtype=np.int64)
        if anc.shape != (count,):
            raise ValueError(f"need {count} forced ancestors, got {anc.shape}")
        if np.any(anc < 1) or np.any(anc > step_idx):
            raise ValueError("forced ancestor out of range at some step")
    elif count:
        u = streams.ancestors.random(count)
        anc = (u * step_idx).astype(np.int64) + 1
    else:
        anc = np.zeros(0, dtype=np.int64)

    if forced_draws is not None:
        y = np.asarray(forced_draws, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape != (count, d):
            raise ValueError(f"need forced draws of shape ({count}, {d}), got {y.shape}")
    elif count:
        y = kernel.sample(streams.kernel, size=count)
    else:
        y = np.zeros((0, d))

    if length > 1:
        h_all = schedule.values(length - 1)
    else:
        h_all = np.zeros(0)
    if count:
        h_applied = h_all[step_idx - 1] if flavor == "kde" else h_all[anc - 1]
    else:
        h_applied = np.zeros(0)
    increments = h_applied[:, None] * y

    points = _accumulate(prefix, anc, increments, length)

    ancestors = np.zeros(length - 1, dtype=np.int64)
    draws = np.full((length - 1, d), np.nan)
    steps_h = np.full(length - 1, np.nan)
    if count:
        ancestors[s - 1 :] = anc
        draws[s - 1 :] = y
        steps_h[s - 1 :] = h_applied

    return Trajectory(
        flavor=flavor,
        points=points,
        ancestors=ancestors,
        kernel_draws=draws,
        steps_h=steps_h,
        seed_prefix_len=seed_len,
    )


def _accumulate(prefix: np.ndarray, anc: np.ndarray, increments: np.ndarray, length: int) -> np.ndarray:
    s, d = prefix.shape
    count = length - s
    if d == 1:
        # Hot path: plain-list indexing is several times faster than ndarray
        # scalar indexing over tens of millions of steps.
        buf = prefix[:, 0].tolist()
        append = buf.append
        inc = increments[:, 0].tolist()
        parents = (anc - 1).tolist()
        for i in range(count):
            append(buf[parents[i]] + inc[i])
        return np.asarray(buf, dtype=float)[:, None]
    points = np.empty((length, d))
    points[:s] = prefix
    parents = anc - 1
    for i in range(count):
        points[s + i] = points[parents[i]] + increments[i]
    return points


# -------------------------------------------------------------- derived views


def predictive_mixture(
    traj: Trajectory,
    schedule: BandwidthSchedule,
    kernel: KernelSpec,
    at_time: int | None = None,
) -> PredictiveMixture:
    """Exact mixture form of the predictive law given the first ``at_time``
    points (default: the full trajectory)."""
    n = len(traj) if at_time is None else int(at_time)
    if not 1 <= n <= len(traj):
        raise ValueError(f"time must be in [1, {len(traj)}], got {n}")
    centers = traj.points[:n].copy()
    if traj.flavor == "kde":
        scales = np.full(n, schedule.at(n))
    else:
        scales = schedule.values(n)
    return PredictiveMixture(centers=centers, scales=scales, kernel=kernel)


def cf_path(
    traj: Trajectory,
    schedule: BandwidthSchedule,
    kernel: KernelSpec,
    t,
    upto: int | None = None,
) -> np.ndarray:
    """Predictive-mixture CF at a fixed t for every time 1..upto.

    Uses cumulative phase sums, so a whole path costs the same as one
    evaluation at the final time.
    """
    n_max = len(traj) if upto is None else int(upto)
    if not 1 <= n_max <= len(traj):
        raise ValueError(f"horizon must be in [1, {len(traj)}], got {n_max}")
    t = np.broadcast_to(np.asarray(t, dtype=float), (traj.dim,))
    phases = np.exp(1j * (traj.points[:n_max] @ t))
    h = schedule.values(n_max)
    counts = np.arange(1, n_max + 1, dtype=float)
    if traj.flavor == "kde":
        sums = kernel.cf_scaled(t, h) * np.cumsum(phases)
    else:
        sums = np.cumsum(phases * kernel.cf_scaled(t, h))
    # Componentwise division: complex/real drops an ulp and phi(0) must be 1.
    return sums.real / counts + 1j * (sums.imag / counts)


def reconstruct_from_genealogy(traj: Trajectory, n: int) -> np.ndarray:
    """Rebuild point n by summing scaled kernel draws along its ancestry.

    Walks the recorded chain back to a root (the origin or an injected data
    point); never reads the stored value of any generated point.
    """
    if not 1 <= n <= len(traj):
        raise ValueError(f"index must be in [1, {len(traj)}], got {n}")
    if 1 < n <= traj.seed_prefix_len:
        raise PrefixPointHasNoGenealogy(f"point {n} was injected as observed data")
    root = traj.root_bound
    acc = np.zeros(traj.dim)
    p = n
    while p > root:
        slot = p - 2
        acc += traj.steps_h[slot] * traj.kernel_draws[slot]
        p = int(traj.ancestors[slot])
    return traj.points[p - 1] + acc


def reconstruct_all(traj: Trajectory) -> np.ndarray:
    """Genealogy reconstruction of every point at once (vectorized walk)."""
    n_pts, d = traj.points.shape
    root = traj.root_bound
    p = np.arange(1, n_pts + 1, dtype=np.int64)
    acc = np.zeros((n_pts, d))
    active = np.nonzero(p > root)[0]
    while active.size:
        slots = p[active] - 2
        acc[active] += traj.steps_h[slots, None] * traj.kernel_draws[slots]
        p[active] = traj.ancestors[slots]
        active = active[p[active] > root]
    return traj.points[p - 1] + acc


def sup_norm_path(traj: Trajectory) -> np.ndarray:
    """Running maximum of the point norms; non-decreasing by construction."""
    return np.maximum.accumulate(np.linalg.norm(traj.points, axis=1))


def dominating_path(traj: Trajectory) -> np.ndarray:
    """Pathwise dominating process: chain sums of h * ||kernel draw||.

    Entry p bounds ||point p|| from above (triangle inequality along the
    ancestry).  Requires full genealogy, so seeded trajectories are rejected.
    """
    if traj.seed_prefix_len > 1:
        raise MissingGenealogy("dominating path needs ancestry for every point")
    n_pts = len(traj)
    norm_inc = traj.steps_h * np.linalg.norm(traj.kernel_draws, axis=1)
    p = np.arange(1, n_pts + 1, dtype=np.int64)
    acc = np.zeros(n_pts)
    active = np.nonzero(p > 1)[0]
    while active.size:
        slots = p[active] - 2
        acc[active] += norm_inc[slots]
        p[active] = traj.ancestors[slots]
        active = active[p[active] > 1]
    return acc


def write_trajectory_csv(traj: Trajectory, path, version: str, config_hash: str) -> None:
    """Dump a trajectory: step, ancestor, h_used, y_1..y_d, x_1..x_d.

    Rows for the origin / injected data carry empty ancestor, h and y fields.
    The first line records the tool version and configuration hash.
    """
    import csv

    d = traj.dim
    with open(path, "w", newline="") as fh:
        fh.write(f"# kdeproc {version} config={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "ancestor", "h_used"]
            + [f"y_{j + 1}" for j in range(d)]
            + [f"x_{j + 1}" for j in range(d)]
        )
        for p in range(1, len(traj) + 1):
            row = [p]
            slot = p - 2
            if p > traj.root_bound:
                row += [int(traj.ancestors[slot]), repr(float(traj.steps_h[slot]))]
                row += [repr(float(v)) for v in traj.kernel_draws[slot]]
            else:
                row += ["", ""] + [""] * d
            row += [repr(float(v)) for v in traj.points[p - 1]]
            writer.writerow(row)
