"""Sampling rules, the GLR stopping rule and single-run simulation.

Samplers:
    ctns     track-and-stop on the constrained lower bound
    cge      game explorer (AdaGrad allocation player vs best-response instance)
    ptns     track-and-stop on the unconstrained best-arm allocation, projected
    uniform  i.i.d. from the uniform allocation (projected onto Pi if needed)
    oracle   i.i.d. from the optimal allocation at the true means

The track-based samplers play argmin_a N_a - sum_s w_{a,s}, where each target
w_s lies in Pi and has every coordinate at least eps_s = 1 / (2 sqrt(K^2 + s)),
capped at half the largest floor Pi admits.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .alt import AltSet
from .divergences import confidence_interval, kl
from .hardness import AllocationTracker, exploration_set, solve_oracle_allocation
from .model import ExplorationScenario, FeasiblePolytope, Problem
from .polytope import Projector, max_floor, project_onto_polytope, solve_optimal_policy

SAMPLERS = ("ctns", "cge", "uniform", "oracle", "ptns")
_BLOCK = 1024


class ThresholdKind(str, Enum):
    HEURISTIC = "heuristic"
    THEORETICAL = "theoretical"


class RadiusKind(str, Enum):
    LOG_T = "log"
    THEORETICAL = "theoretical"


@dataclass(frozen=True)
class StoppingConfig:
    delta: float = 0.1
    threshold_kind: ThresholdKind = ThresholdKind.HEURISTIC
    alpha: float = 1.5
    cge_radius_kind: RadiusKind = RadiusKind.LOG_T

    def __post_init__(self):
        object.__setattr__(self, "threshold_kind", ThresholdKind(self.threshold_kind))
        object.__setattr__(self, "cge_radius_kind", RadiusKind(self.cge_radius_kind))
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.threshold_kind is ThresholdKind.THEORETICAL and not self.alpha > 1:
            raise ValueError("alpha must exceed 1")

    def threshold(self, t, n_arms) -> float:
        if self.threshold_kind is ThresholdKind.HEURISTIC:
            return heuristic_threshold(t, self.delta)
        # conservative stand-in for the unspecified constant; not from the literature
        if t < 1:
            return math.inf
        return math.log(t ** self.alpha / self.delta) + n_arms * math.log(math.log(t) + 1.0)

    def radius(self, t) -> float:
        if t <= 1:
            return 0.0
        if self.cge_radius_kind is RadiusKind.LOG_T:
            return math.log(t)
        return 3.0 * math.log(t) + math.log(math.log(t)) if t > math.e else 3.0 * math.log(t)


def heuristic_threshold(t, delta) -> float:
    """log((1 + log log t) / delta); +inf before t = 3."""
    if t < 3:
        return math.inf
    return math.log((1.0 + math.log(math.log(t))) / delta)


def forced_floor(t, n_arms) -> float:
    return 1.0 / (2.0 * math.sqrt(n_arms * n_arms + t))


@dataclass
class ExplorerState:
    counts: np.ndarray
    sums: np.ndarray
    domain: tuple
    cumulative_targets: np.ndarray
    floor_cap: float = 1.0

    @property
    def t(self) -> int:
        return int(self.counts.sum())

    @property
    def empirical_means(self) -> np.ndarray:
        return np.clip(self.sums / self.counts, self.domain[0], self.domain[1])

    @property
    def epsilon_t(self) -> float:
        return min(forced_floor(self.t, len(self.counts)), self.floor_cap)


def glr_statistic(counts, means, alt: AltSet) -> float:
    """t * D(N/t, mu_hat, F), or 0 when the empirical optimum is tied."""
    counts = np.asarray(counts, dtype=float)
    _, _, V, gaps, unique = alt.optimum(means)
    if not unique:
        return 0.0
    t = counts.sum()
    values, _, _ = alt.per_neighbor(counts / t, means, V)
    return float(t * values.min())


class _GlrCheck:
    """Per-run evaluation of the GLR statistic against the threshold.

    Gaussian arms on an unbounded domain use the closed form directly.  Other
    cases first try a certificate: the confusing instances of the last exact
    evaluation still lie on their hyperplanes, so plugging them in gives an
    upper bound on each neighbour's value.  When that bound is below the
    threshold the exact solve is skipped; the decision is the same.
    """

    def __init__(self, alt: AltSet):
        self.alt = alt
        lo, hi = alt.domain
        self.closed = alt.family.is_gaussian and not (np.isfinite(lo) or np.isfinite(hi))
        self.two_s2 = 2.0 * alt.family.sigma ** 2 if alt.family.is_gaussian else None
        self.key = None
        self.lam = None
        self.warm = {}

    def exact(self, counts, means, opt) -> float:
        if not opt[4]:
            return 0.0
        counts = np.asarray(counts, dtype=float)
        if self.closed:
            V, gaps = opt[2], opt[3]
            return float(np.min(gaps * gaps / ((V * V) @ (1.0 / counts))) / self.two_s2)
        t = counts.sum()
        values, lam, _ = self.alt.per_neighbor(counts / t, means, opt[2], self.warm)
        self.key = opt[0]
        self.lam = lam
        return float(t * values.min())

    def check(self, counts, means, opt, thr):
        """(statistic or None, stop).  None means the exact value was not needed."""
        if not opt[4] or not math.isfinite(thr):
            return None, False
        if not self.closed and self.key is opt[0]:
            up = np.sum(counts[None, :] * kl(np.broadcast_to(means, self.lam.shape), self.lam,
                                             self.alt.family), axis=1)
            if np.min(up) <= thr * (1.0 - 1e-9):
                return None, False
        stat = self.exact(counts, means, opt)
        return stat, stat > thr


def should_stop(statistic, t, config: StoppingConfig, n_arms) -> bool:
    return statistic > config.threshold(t, n_arms)


class RewardSource:
    """Reward of the n-th pull of arm a comes from a Philox stream keyed on
    (seed, a), so the arms' sequences do not depend on the order of play."""

    def __init__(self, means, family, seed, env_sigmas=None):
        self.means = np.asarray(means, dtype=float)
        self.gaussian = family.is_gaussian
        K = len(self.means)
        if self.gaussian:
            sig = family.sigma if env_sigmas is None else env_sigmas
            self.sigmas = np.broadcast_to(np.asarray(sig, dtype=float), (K,)).copy()
        self.gens = [np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(a,))))
                     for a in range(K)]
        self.buf = [None] * K
        self.pos = [_BLOCK] * K

    def _refill(self, a):
        g = self.gens[a]
        if self.gaussian:
            self.buf[a] = self.means[a] + self.sigmas[a] * g.standard_normal(_BLOCK)
        else:
            self.buf[a] = (g.random(_BLOCK) < self.means[a]).astype(float)
        self.pos[a] = 0

    def draw(self, a) -> float:
        if self.pos[a] >= _BLOCK:
            self._refill(a)
        x = self.buf[a][self.pos[a]]
        self.pos[a] += 1
        return float(x)


class _Uniforms:
    def __init__(self, seed):
        self.gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(1_000_003,))))
        self.buf = self.gen.random(_BLOCK)
        self.pos = 0

    def next(self) -> float:
        if self.pos >= _BLOCK:
            self.buf = self.gen.random(_BLOCK)
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return float(u)


@dataclass
class RunContext:
    """Everything a sampler may read; built once per run."""

    problem: Problem
    alt: AltSet
    pi_poly: FeasiblePolytope
    config: StoppingConfig
    oracle_w: np.ndarray | None = None
    options: dict = field(default_factory=dict)


class Sampler:
    name = "base"
    tracking = True

    def __init__(self, ctx: RunContext):
        self.ctx = ctx

    def target(self, state: ExplorerState, opt) -> np.ndarray:
        raise NotImplementedError


class CTnS(Sampler):
    """Track the optimal allocation at the empirical means."""

    name = "ctns"

    def __init__(self, ctx):
        super().__init__(ctx)
        self.tracker = AllocationTracker(ctx.alt, ctx.pi_poly, ctx.options.get("eta0", 0.5),
                                         ctx.options.get("inner_iters", 1))
        self.prev = self.tracker.w

    def target(self, state, opt):
        eps = state.epsilon_t
        if not opt[4]:
            return self.tracker.project(self.prev, eps)
        self.prev = self.tracker.step(state.empirical_means, eps, V=opt[2])
        return self.prev


class PTnS(Sampler):
    """Track the unconstrained best-arm allocation, projected onto Pi."""

    name = "ptns"

    def __init__(self, ctx):
        super().__init__(ctx)
        K = ctx.pi_poly.n_arms
        simplex = FeasiblePolytope.simplex(K)
        self.bai = AltSet(simplex, ctx.alt.family, ctx.alt.domain)
        self.tracker = AllocationTracker(self.bai, simplex, ctx.options.get("eta0", 0.5),
                                         ctx.options.get("inner_iters", 1))
        self.prev = self.tracker.w
        self.project = Projector(ctx.pi_poly)

    def target(self, state, opt):
        eps = state.epsilon_t
        mu = state.empirical_means
        _, _, V, _, unique = self.bai.optimum(mu)
        if unique:
            self.prev = self.tracker.step(mu, eps, V=V)
        return self.project(self.prev, eps)


class CGE(Sampler):
    """Allocation player: AdaGrad on linear gains; instance player: best response."""

    name = "cge"

    def __init__(self, ctx):
        super().__init__(ctx)
        K = ctx.pi_poly.n_arms
        self.project = Projector(ctx.pi_poly)
        self.project_w = Projector(ctx.pi_poly)
        self.warm = {}
        self.ci_warm = {}
        self.w = self.project(np.full(K, 1.0 / K))
        self.sq = np.zeros(K)
        self.eta = ctx.options.get("adagrad_eta", 1.0)
        self.log = [] if ctx.options.get("log_gains") else None

    def gains(self, state, lam):
        fam = self.ctx.alt.family
        f = self.ctx.config.radius(state.t)
        counts = state.counts
        mu = state.empirical_means
        if not fam.is_gaussian:
            lam = np.clip(lam, 1e-9, 1 - 1e-9)
        alpha, beta = confidence_interval(mu, counts, f, fam, self.ctx.alt.domain, self.ci_warm)
        opt = np.maximum(kl(alpha, lam, fam), kl(beta, lam, fam))
        return np.maximum(f / counts, opt)

    def adagrad(self, U):
        self.sq += U * U
        h = np.sqrt(self.sq + 1e-12)
        self.w = self.project_w(self.w + self.eta * U / h, 0.0, weights=h)

    def target(self, state, opt):
        w_t = self.w
        if opt[4]:
            values, lam, _ = self.ctx.alt.per_neighbor(w_t, state.empirical_means, opt[2], self.warm)
            U = self.gains(state, lam[int(np.argmin(values))])
            if self.log is not None:
                self.log.append((w_t.copy(), U.copy()))
            self.adagrad(U)
        return self.project(w_t, state.epsilon_t)


class _IID(Sampler):
    tracking = False

    def __init__(self, ctx, w):
        super().__init__(ctx)
        self.w = np.asarray(w, dtype=float)
        self.cdf = np.cumsum(self.w)
        self.cdf[-1] = 1.0

    def target(self, state, opt):
        return self.w

    def draw(self, u) -> int:
        return int(np.searchsorted(self.cdf, u, side="right"))


class Uniform(_IID):
    name = "uniform"

    def __init__(self, ctx):
        K = ctx.pi_poly.n_arms
        super().__init__(ctx, project_onto_polytope(np.full(K, 1.0 / K), ctx.pi_poly))


class Oracle(_IID):
    name = "oracle"

    def __init__(self, ctx):
        w = ctx.oracle_w
        if w is None:
            p = ctx.problem
            w = solve_oracle_allocation(p.instance.means, p.polytope, p.scenario, p.instance.family,
                                        p.instance.domain).w
        # nonnegative and normalised exactly for sampling
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        super().__init__(ctx, w / w.sum())


SAMPLER_CLASSES = {"ctns": CTnS, "cge": CGE, "uniform": Uniform, "oracle": Oracle, "ptns": PTnS}


@dataclass(eq=False)
class RunRecord:
    seed: int
    sampler: str
    scenario: str
    exploration: str
    tau: int
    correct: bool | None
    censored: bool
    counts: np.ndarray
    statistic: float
    threshold: float
    track_margin: float          # min over steps of min_a N_a - (sqrt(t + K^2) - K)
    target_violation: float      # max over rounds of max(B w_t - c) for the target allocation
    recommended: np.ndarray | None
    final_means: np.ndarray
    wall_ms: float = 0.0
    log: dict | None = None


def recommend(means, polytope, start=None):
    return solve_optimal_policy(means, polytope, start)


def run_once(problem: Problem, sampler: str, seed: int, config: StoppingConfig | None = None,
             max_steps: int = 10_000_000, oracle_w=None, options=None, scenario_name="custom",
             keep_log=False) -> RunRecord:
    """Simulate one sampler until the stopping rule fires (or `max_steps`)."""
    t0 = time.perf_counter()
    config = config or StoppingConfig()
    options = dict(options or {})
    if keep_log:
        options["log_gains"] = True
    inst = problem.instance
    K = inst.n_arms
    alt = AltSet(problem.polytope, inst.family, inst.domain)
    pi_poly = exploration_set(problem.polytope, problem.scenario)
    ctx = RunContext(problem, alt, pi_poly, config, oracle_w, options)
    smp = SAMPLER_CLASSES[sampler](ctx)
    rewards = RewardSource(inst.means, inst.family, seed, problem.env_sigmas)
    uniforms = _Uniforms(seed)

    counts = np.zeros(K, dtype=np.int64)
    sums = np.zeros(K)
    for a in range(K):
        counts[a] += 1
        sums[a] += rewards.draw(a)
    # a tight Pi may not admit the early floors; keep half of the largest one it does
    state = ExplorerState(counts, sums, inst.domain, counts.astype(float), 0.5 * max_floor(pi_poly))
    B = np.asarray(pi_poly.B)
    c = np.asarray(pi_poly.c)
    lo, hi = inst.domain
    t = K
    margin = float(np.min(counts) - (math.sqrt(t + K * K) - K))
    violation = -math.inf
    targets_log = [] if keep_log else None
    censored = False
    glr = _GlrCheck(alt)
    stat = None
    thr = math.inf
    while True:
        means = np.clip(sums / counts, lo, hi)
        opt = alt.optimum(means)
        thr = config.threshold(t, K)
        stat, stop = glr.check(counts, means, opt, thr)
        if stop:
            break
        if t >= max_steps:
            censored = True
            break
        target = smp.target(state, opt)
        violation = max(violation, float(np.max(B @ target - c)))
        if targets_log is not None:
            targets_log.append(target.copy())
        if smp.tracking:
            state.cumulative_targets += target
            arm = int(np.argmin(counts - state.cumulative_targets))
        else:
            arm = smp.draw(uniforms.next())
        counts[arm] += 1
        sums[arm] += rewards.draw(arm)
        t += 1
        m = counts.min() - (math.sqrt(t + K * K) - K)
        if m < margin:
            margin = float(m)
    means = np.clip(sums / counts, lo, hi)
    if stat is None:
        stat = glr.exact(counts, means, alt.optimum(means))
    rec = None
    correct = None
    if not censored:
        rec = alt.optimum(means)[0]
        truth = solve_optimal_policy(inst.means, problem.polytope)
        correct = bool(np.max(np.abs(rec.pi - truth.pi)) <= 1e-6)
    log = None
    if keep_log:
        log = {"targets": targets_log}
        if isinstance(smp, CGE):
            log["gains"] = smp.log
    return RunRecord(
        seed=int(seed), sampler=sampler, scenario=scenario_name,
        exploration=ExplorationScenario(problem.scenario).value, tau=int(t), correct=correct,
        censored=censored, counts=counts.copy(), statistic=stat, threshold=thr,
        track_margin=margin, target_violation=violation,
        recommended=None if rec is None else np.asarray(rec.pi), final_means=means,
        wall_ms=(time.perf_counter() - t0) * 1000.0, log=log)
