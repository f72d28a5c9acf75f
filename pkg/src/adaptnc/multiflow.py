"""Slot scheduling across competing coded flows sharing one frame.

Each flow brings its own receiver set, arrival rate, delivery-ratio
requirement and weight. A per-flow service curve (expected packets delivered
as a function of allocated slots, saturated backlog) feeds a per-frame slot
allocation that maximizes deficit-adjusted weighted service; virtual deficit
queues track how far each flow is behind its requirement and steer future
allocations. The online loop combines the allocation with slot-level
simulation of every flow's transmissions, Bernoulli-batch (or Poisson)
arrivals, and per-frame packet drops: traffic not delivered within its frame
is lost, never queued.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelModel
from .errors import ConfigError
from .policies import BlockPolicy, OptimalPolicy, RetransmissionPolicy
from .rng import RngSpec
from .simulate import simulate_frame
from .solver import solve_monotone

INTRA_POLICIES = ("optimal", "retransmission")

# Slope of the deficit trajectory (per frame, least squares over the last
# half of the run) above which a flow is declared unstable.
STABILITY_SLOPE = 1e-3


@dataclass(frozen=True)
class FlowSpec:
    """One traffic flow: who receives it, how much arrives, what it needs."""

    flow_id: int
    channel: ChannelModel
    arrival_rate: float  # mean packets per frame
    delivery_ratio: float  # required delivered/arrived fraction
    weight: float = 1.0
    arrival_process: str = "bernoulli"  # "bernoulli" (batch) or "poisson"
    arrival_batches: int | None = None  # Bernoulli trials per frame; None -> horizon

    def __post_init__(self):
        if self.arrival_rate < 0:
            raise ConfigError(f"flow {self.flow_id}: arrival rate must be >= 0")
        if not 0.0 <= self.delivery_ratio <= 1.0:
            raise ConfigError(f"flow {self.flow_id}: delivery ratio must be in [0, 1]")
        if self.weight <= 0:
            raise ConfigError(f"flow {self.flow_id}: weight must be > 0")
        if self.arrival_process not in ("bernoulli", "poisson"):
            raise ConfigError(
                f"flow {self.flow_id}: unknown arrival process {self.arrival_process!r}"
            )
        if self.arrival_batches is not None and self.arrival_batches < 1:
            raise ConfigError(f"flow {self.flow_id}: arrival batches must be >= 1")

    def sample_arrivals(self, horizon: int, gen: np.random.Generator) -> int:
        if self.arrival_process == "poisson":
            return int(gen.poisson(self.arrival_rate))
        n = self.arrival_batches if self.arrival_batches is not None else horizon
        p = self.arrival_rate / n
        if p > 1.0:
            raise ConfigError(
                f"flow {self.flow_id}: arrival rate {self.arrival_rate} exceeds "
                f"{n} Bernoulli batches per frame"
            )
        return int(gen.binomial(n, p))


@dataclass
class DeficitState:
    """Per-flow virtual queues for the delivery-ratio constraints.

    ``nu_hat[f]`` rises by the thinned arrivals of flow f and falls by its
    delivered packets, clamped at zero; its long-run behavior certifies
    whether the requirement vector is being met.
    """

    nu_hat: np.ndarray
    history: list = field(default_factory=list)

    @classmethod
    def zeros(cls, n_flows: int) -> "DeficitState":
        return cls(nu_hat=np.zeros(n_flows))

    def apply(self, a_hat, c_hat):
        self.nu_hat = update_deficit(self.nu_hat, a_hat, c_hat)
        self.history.append(self.nu_hat.copy())


@dataclass(frozen=True)
class ServiceCurve:
    """Expected packets delivered to every receiver of one flow, by slot
    budget, under saturated backlog."""

    flow_id: int
    values: np.ndarray  # values[s] for s = 0..horizon

    def __post_init__(self):
        self.values.setflags(write=False)


_CURVE_CACHE: dict = {}


def service_curve(flow: FlowSpec, horizon: int, intra: str = "optimal") -> ServiceCurve:
    """Value-by-slots curve for one flow: entry s is the expected delivery of
    the intra-flow policy given s dedicated slots. One bottom-up solve covers
    every budget 0..horizon; results are cached per (channel, horizon, intra).
    """
    if horizon < 1:
        raise ConfigError("service curve needs a horizon of at least 1 slot")
    if intra not in INTRA_POLICIES:
        raise ConfigError(f"unknown intra-flow policy {intra!r}")
    key = (flow.channel.erasures, horizon, intra)
    values = _CURVE_CACHE.get(key)
    if values is None:
        k_cap = 1 if intra == "retransmission" else None
        values = solve_monotone(horizon, flow.channel, k_cap=k_cap).value
        values.setflags(write=False)
        _CURVE_CACHE[key] = values
    return ServiceCurve(flow_id=flow.flow_id, values=values)


def intra_policy(flow: FlowSpec, horizon: int, intra: str = "optimal") -> BlockPolicy:
    """Block-size policy matching the curve ``intra`` mode."""
    if intra == "retransmission":
        return RetransmissionPolicy()
    return OptimalPolicy(solve_monotone(horizon, flow.channel))


def allocate_slots(
    flows: list,
    deficits,
    rho: float,
    horizon: int,
    curves: list | None = None,
) -> np.ndarray:
    """Per-frame slot split maximizing sum_f (w_f/rho + nu_hat_f) * c_f(s_f).

    Exact resource-allocation dynamic program over flows (state = slots still
    available, O(flows * horizon^2)). Among maximizing schedules the
    lexicographically smallest is returned: ties prefer fewer slots for the
    lowest flow index first.
    """
    if rho <= 0:
        raise ConfigError("step size rho must be > 0")
    if not flows:
        return np.zeros(0, dtype=int)
    nu = deficits.nu_hat if isinstance(deficits, DeficitState) else np.asarray(deficits, dtype=float)
    if len(nu) != len(flows):
        raise ConfigError("deficit vector length must match the flow list")
    if curves is None:
        curves = [service_curve(f, horizon) for f in flows]

    n_flows = len(flows)
    gains = [
        (flows[i].weight / rho + float(nu[i])) * curves[i].values[: horizon + 1]
        for i in range(n_flows)
    ]

    # best[u]: optimal value using flows i..end with u slots; choice[i][u]:
    # the smallest slot count for flow i attaining it.
    best = np.zeros(horizon + 1)
    choice = np.zeros((n_flows, horizon + 1), dtype=int)
    for i in range(n_flows - 1, -1, -1):
        g = gains[i]
        nxt = best
        best = np.empty(horizon + 1)
        for u in range(horizon + 1):
            top = g[0] + nxt[u]
            pick = 0
            for s in range(1, u + 1):
                v = g[s] + nxt[u - s]
                if v > top:
                    top = v
                    pick = s
            best[u] = top
            choice[i, u] = pick

    schedule = np.zeros(n_flows, dtype=int)
    u = horizon
    for i in range(n_flows):
        schedule[i] = choice[i, u]
        u -= schedule[i]
    return schedule


def thinned_arrivals(arrivals: int, delivery_ratio: float, gen: np.random.Generator) -> int:
    """Arrivals surviving a Bernoulli(delivery_ratio) thinning — the traffic
    the deficit queue actually has to answer for."""
    if not 0.0 <= delivery_ratio <= 1.0:
        raise ConfigError("delivery ratio must be in [0, 1]")
    if arrivals < 0:
        raise ValueError("arrival count must be non-negative")
    return int(gen.binomial(arrivals, delivery_ratio))


def update_deficit(nu_hat, a_hat, c_hat):
    """Next deficit value: max(0, nu_hat + a_hat - c_hat), element-wise."""
    return np.maximum(0.0, np.asarray(nu_hat, dtype=float) + np.asarray(a_hat) - np.asarray(c_hat))


def deficit_slope(series) -> float:
    """Least-squares slope per frame over the last half of a deficit series."""
    y = np.asarray(series, dtype=float)
    tail = y[len(y) // 2 :]
    if len(tail) < 2:
        return 0.0
    return float(np.polyfit(np.arange(len(tail)), tail, 1)[0])


@dataclass
class StaticDualTrace:
    """Deterministic multiplier iteration on the fluid-scale problem."""

    s_star: np.ndarray  # (iterations, flows) schedules
    mu_star: np.ndarray  # (iterations, flows) curve values of the schedule
    nu_hat: np.ndarray  # (iterations, flows) multipliers after each update

    def weighted_value(self, weights, tail: float = 0.5) -> float:
        """Time-averaged weighted service rate over the trailing fraction."""
        start = int(len(self.mu_star) * (1.0 - tail))
        return float((self.mu_star[start:] @ np.asarray(weights, dtype=float)).mean())


def static_dual_iteration(
    flows: list,
    horizon: int,
    rho: float,
    iterations: int,
    intra: str = "optimal",
) -> StaticDualTrace:
    """Iterate schedule argmax and multiplier update with mean drift.

    No sampling: each round allocates slots under the current multipliers,
    reads off mu*_f = c_f(s*_f), and moves each multiplier by the mean
    requirement shortfall arrival_rate*delivery_ratio - mu*_f (clamped at
    zero). Bounded trajectories certify feasibility of the requirement
    vector; unbounded growth certifies infeasibility.
    """
    if iterations < 1:
        raise ConfigError("need at least one iteration")
    n_flows = len(flows)
    curves = [service_curve(f, horizon, intra) for f in flows]
    need = np.array([f.arrival_rate * f.delivery_ratio for f in flows])

    s_star = np.zeros((iterations, n_flows), dtype=int)
    mu_star = np.zeros((iterations, n_flows))
    nu_path = np.zeros((iterations, n_flows))
    nu = np.zeros(n_flows)
    for it in range(iterations):
        s = allocate_slots(flows, nu, rho, horizon, curves)
        mu = np.array([curves[i].values[s[i]] for i in range(n_flows)])
        nu = update_deficit(nu, need, mu)
        s_star[it] = s
        mu_star[it] = mu
        nu_path[it] = nu
    return StaticDualTrace(s_star=s_star, mu_star=mu_star, nu_hat=nu_path)


@dataclass
class MultiflowTrace:
    """Frame-by-frame record of one online scheduling run."""

    flow_ids: list
    weights: np.ndarray
    arrival_rates: np.ndarray
    delivery_requirements: np.ndarray
    horizon: int
    rho: float
    intra: str
    s_star: np.ndarray  # (frames, flows) allocated slots
    arrivals: np.ndarray  # (frames, flows) packets arrived
    delivered: np.ndarray  # (frames, flows) packets delivered in-frame
    nu_hat: np.ndarray  # (frames, flows) deficits after each frame
    schedule_value: np.ndarray  # (frames, flows) saturated curve value c_f(s*_f)

    @property
    def frames(self) -> int:
        return self.s_star.shape[0]

    def delivery_ratio(self) -> np.ndarray:
        """Long-run delivered packets per frame relative to the arrival rate."""
        rates = np.where(self.arrival_rates > 0, self.arrival_rates, 1.0)
        return self.delivered.mean(axis=0) / rates

    def weighted_throughput(self, tail: float = 1.0) -> float:
        """Weighted delivered packets per frame over the trailing fraction."""
        start = int(self.frames * (1.0 - tail))
        return float(self.delivered[start:].mean(axis=0) @ self.weights)

    def schedule_weighted_throughput(self, tail: float = 1.0) -> float:
        """Weighted saturated service value of the realized schedules; the
        arrival-independent quantity the vanishing-gap property addresses."""
        start = int(self.frames * (1.0 - tail))
        return float(self.schedule_value[start:].mean(axis=0) @ self.weights)

    def deficit_slopes(self) -> np.ndarray:
        return np.array([deficit_slope(self.nu_hat[:, i]) for i in range(len(self.flow_ids))])

    def is_stable(self, slope_tol: float = STABILITY_SLOPE) -> bool:
        return bool((self.deficit_slopes() <= slope_tol).all())

    def write_csv(self, fp):
        writer = csv.writer(fp)
        writer.writerow(["frame", "flow", "s_star", "arrivals", "delivered", "nu_hat"])
        for k in range(self.frames):
            for i, fid in enumerate(self.flow_ids):
                writer.writerow(
                    [k, fid, int(self.s_star[k, i]), int(self.arrivals[k, i]),
                     int(self.delivered[k, i]), repr(float(self.nu_hat[k, i]))]
                )


def run_online(
    flows: list,
    frames: int,
    horizon: int,
    rho: float,
    rng: RngSpec,
    intra: str = "optimal",
) -> MultiflowTrace:
    """Online scheduling loop: allocate, transmit, thin, update deficits.

    Per frame: sample each flow's arrivals, split the slots with
    allocate_slots under current deficits, run every flow's slot-level
    transmission over its budget (fresh backlog = this frame's arrivals;
    leftovers drop at the frame boundary), thin the arrivals by the required
    delivery ratio, and update the deficit queues with thinned arrivals minus
    actual deliveries.

    Randomness layout on top of ``rng``: stream +1 drives arrivals, +2 the
    thinning, and frame k / flow index i transmits on stream
    3 + k*len(flows) + i — so any single frame can be replayed in isolation
    and results never depend on scheduling order.
    """
    if frames < 1:
        raise ConfigError("need at least one frame")
    if len({f.flow_id for f in flows}) != len(flows):
        raise ConfigError("flow ids must be unique")
    n_flows = len(flows)
    curves = [service_curve(f, horizon, intra) for f in flows]
    policies = [intra_policy(f, horizon, intra) for f in flows]
    arrival_gen = rng.shifted(1).generator()
    thinning_gen = rng.shifted(2).generator()
    state = DeficitState.zeros(n_flows)

    s_star = np.zeros((frames, n_flows), dtype=int)
    arrivals = np.zeros((frames, n_flows), dtype=int)
    delivered = np.zeros((frames, n_flows), dtype=int)
    nu_hat = np.zeros((frames, n_flows))
    schedule_value = np.zeros((frames, n_flows))

    for k in range(frames):
        a = [f.sample_arrivals(horizon, arrival_gen) for f in flows]
        s = allocate_slots(flows, state, rho, horizon, curves)
        c_hat = np.zeros(n_flows, dtype=int)
        for i, f in enumerate(flows):
            if s[i] > 0 and a[i] > 0:
                trace = simulate_frame(
                    policies[i], int(s[i]), int(a[i]), f.channel,
                    rng.shifted(3 + k * n_flows + i),
                )
                c_hat[i] = trace.delivered
        a_hat = np.array(
            [thinned_arrivals(a[i], f.delivery_ratio, thinning_gen) for i, f in enumerate(flows)]
        )
        state.apply(a_hat, c_hat)

        s_star[k] = s
        arrivals[k] = a
        delivered[k] = c_hat
        nu_hat[k] = state.nu_hat
        schedule_value[k] = [curves[i].values[s[i]] for i in range(n_flows)]

    return MultiflowTrace(
        flow_ids=[f.flow_id for f in flows],
        weights=np.array([f.weight for f in flows], dtype=float),
        arrival_rates=np.array([f.arrival_rate for f in flows], dtype=float),
        delivery_requirements=np.array([f.delivery_ratio for f in flows], dtype=float),
        horizon=horizon,
        rho=rho,
        intra=intra,
        s_star=s_star,
        arrivals=arrivals,
        delivered=delivered,
        nu_hat=nu_hat,
        schedule_value=schedule_value,
    )


@dataclass
class RegionMap:
    """Stability classification of a requirement grid under both intra-flow
    transmission modes."""

    axis: str  # which flow field the grid varies: "delivery_ratio" or "arrival_rate"
    grid_x: np.ndarray  # values applied to the first flow
    grid_y: np.ndarray  # values applied to the second flow
    stable_nc: np.ndarray  # (len(grid_x), len(grid_y)) bool
    stable_retx: np.ndarray

    def write_csv(self, fp):
        writer = csv.writer(fp)
        writer.writerow(["grid_x", "grid_y", "stable_nc", "stable_retx"])
        for ix, x in enumerate(self.grid_x):
            for iy, y in enumerate(self.grid_y):
                writer.writerow(
                    [repr(float(x)), repr(float(y)),
                     int(self.stable_nc[ix, iy]), int(self.stable_retx[ix, iy])]
                )


def _sweep_cell(args):
    """One grid point of a region sweep; module-level so worker pools can
    pickle it. Returns (ix, iy, stable under coding, stable under retx)."""
    ix, iy, pair, frames, horizon, rho, rng, slope_tol = args
    flags = []
    for j, intra in enumerate(INTRA_POLICIES):
        trace = run_online(pair, frames, horizon, rho, rng.shifted(j << 32), intra=intra)
        flags.append(trace.is_stable(slope_tol))
    return ix, iy, flags[0], flags[1]


def rate_region_sweep(
    flows: list,
    grid,
    horizon: int,
    rho: float,
    frames: int,
    rng: RngSpec,
    axis: str = "delivery_ratio",
    slope_tol: float = STABILITY_SLOPE,
    workers: int = 1,
) -> RegionMap:
    """Classify every grid point as stable or not, with and without coding.

    The two template flows get the grid values on ``axis`` (first flow takes
    the x value, second the y value); each point runs the online loop twice —
    optimal intra-flow blocks and plain retransmission — and is stable when
    no flow's deficit trend exceeds ``slope_tol`` per frame. Each (point,
    mode) pair draws from its own stream block, so results are identical
    whether cells run serially or across ``workers`` processes.
    """
    if len(flows) != 2:
        raise ConfigError("region sweep expects exactly two template flows")
    if axis not in ("delivery_ratio", "arrival_rate"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    values = np.asarray(grid, dtype=float)
    jobs = []
    for ix, x in enumerate(values):
        for iy, y in enumerate(values):
            pair = [
                replace(flows[0], **{axis: float(x)}),
                replace(flows[1], **{axis: float(y)}),
            ]
            cell = ix * len(values) + iy
            jobs.append((ix, iy, pair, frames, horizon, rho,
                         rng.shifted((2 * cell) << 32), slope_tol))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]

    stable_nc = np.zeros((len(values), len(values)), dtype=bool)
    stable_retx = np.zeros_like(stable_nc)
    for ix, iy, nc_ok, retx_ok in results:
        stable_nc[ix, iy] = nc_ok
        stable_retx[ix, iy] = retx_ok
    return RegionMap(
        axis=axis,
        grid_x=values.copy(),
        grid_y=values.copy(),
        stable_nc=stable_nc,
        stable_retx=stable_retx,
    )
