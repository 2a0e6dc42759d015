"""Built-in problem instances and scenario resolution.

Each built-in carries its caption text, the default confidence level, the
number of seeds used for it originally and the optimal policy stated in the
caption (checked by the test-suite against a fresh LP solve).
"""
from __future__ import annotations

import difflib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .explorers import SAMPLERS
from .model import BanditInstance, ExplorationScenario, FeasiblePolytope, Problem, RewardFamily, load_problem


@dataclass(frozen=True)
class Builtin:
    name: str
    caption: str
    problem: Problem
    delta: float
    n_seeds: int
    stated_optimum: dict          # arm index (0-based) -> probability; other arms 0
    optimum_tol: float = 1e-6

    def stated_policy(self) -> np.ndarray:
        pi = np.zeros(self.problem.instance.n_arms)
        for a, p in self.stated_optimum.items():
            pi[a] = p
        return pi


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything an experiment needs: instance, constraints, exploration
    scenario, confidence level, samplers and seeds."""

    name: str
    problem: Problem
    delta: float = 0.1
    samplers: tuple = SAMPLERS
    n_seeds: int = 100
    base_seed: int = 0
    caption: str = ""
    options: dict = field(default_factory=dict)

    @property
    def seeds(self) -> list[int]:
        return list(range(self.base_seed, self.base_seed + self.n_seeds))

    @property
    def exploration(self) -> str:
        return ExplorationScenario(self.problem.scenario).value


def _gauss(means, A, b, sigma=1.0, env=None):
    inst = BanditInstance(means, RewardFamily.gaussian(sigma))
    return Problem(inst, FeasiblePolytope(len(means), A, b), ExplorationScenario.ANYTIME,
                   None if env is None else np.asarray(env, dtype=float))


def _bern(means, A, b):
    inst = BanditInstance(means, RewardFamily.bernoulli())
    return Problem(inst, FeasiblePolytope(len(means), A, b), ExplorationScenario.ANYTIME)


_FIG3_A = [[1, 1, 0, 0, 0], [0, 0, 1, 1, 0]]
_FIG3_B = [0.5, 0.5]

# (title, average rating, sigma, action, drama, family)
IMDB_MOVIES = (
    ("The Net", 3.67, 1.26, 1, 1, 0),
    ("Happily N'Ever After", 2.97, 1.30, 0, 0, 1),
    ("Tomorrowland", 2.94, 1.31, 1, 0, 1),
    ("American Hero", 3.52, 1.33, 1, 1, 0),
    ("Das Boot", 3.18, 1.30, 0, 1, 0),
    ("Final Destination 3", 2.02, 0.93, 0, 0, 0),
    ("Licence to Kill", 2.79, 1.22, 1, 0, 0),
    ("The Hundred-Foot Journey", 2.97, 1.31, 0, 1, 0),
    ("The Matrix", 2.32, 1.14, 1, 0, 0),
    ("Creature", 2.53, 1.20, 0, 0, 0),
    ("The Basket", 2.55, 1.19, 0, 1, 0),
    ("Star Trek: The Motion Picture", 2.54, 1.16, 0, 0, 0),
)


def _imdb() -> Problem:
    means = [m[1] for m in IMDB_MOVIES]
    env = [m[2] for m in IMDB_MOVIES]
    action = [m[3] for m in IMDB_MOVIES]
    drama = [m[4] for m in IMDB_MOVIES]
    family = [m[5] for m in IMDB_MOVIES]
    # at most 0.3 on action, at least 0.3 on drama and on family (>= rows negated)
    A = [action, [-x for x in drama], [-x for x in family]]
    b = [0.3, -0.3, -0.3]
    return _gauss(means, A, b, sigma=1.33, env=env)


def _catalog():
    entries = [
        Builtin(
            "fig3-triangle",
            "5 Gaussian arms (sigma=1), mu=(1, 0.5, 0.4, 0.4, 0.5), constraints pi1+pi2 <= 0.5 and "
            "pi3+pi4 <= 0.5, anytime, delta=0.1, 1000 seeds. Easy as BAI, hard with constraints.",
            _gauss([1, 0.5, 0.4, 0.4, 0.5], _FIG3_A, _FIG3_B), 0.1, 1000,
            {0: 0.5, 4: 0.5}),
        Builtin(
            "fig3-star",
            "5 Gaussian arms (sigma=1), mu=(1, 0.5, 0.4, 0.95, 0.8), constraints pi1+pi2 <= 0.5 and "
            "pi3+pi4 <= 0.5, anytime, delta=0.1, 1000 seeds. Hard as BAI, easier with constraints.",
            _gauss([1, 0.5, 0.4, 0.95, 0.8], _FIG3_A, _FIG3_B), 0.1, 1000,
            {0: 0.5, 3: 0.5}),
        Builtin(
            "fig5",
            "8 Gaussian arms (sigma=1), mu=[1.0, 0.7, 0.3, 0.0, -0.5, -1.0, -2.0, -3.0], one constraint "
            "7pi1 + 7pi2 + pi3 <= 0.5. Optimal policy pi3 = pi4 = 0.5. delta=0.1, 1000 seeds.",
            _gauss([1.0, 0.7, 0.3, 0.0, -0.5, -1.0, -2.0, -3.0], [[7, 7, 1, 0, 0, 0, 0, 0]], [0.5]),
            0.1, 1000, {2: 0.5, 3: 0.5}),
        Builtin(
            "fig8-bernoulli",
            "7 Bernoulli arms, mu=(0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2), constraints pi1+pi2 <= 0.5 and "
            "pi3+pi4 <= 0.5. Optimal policy pi1 = 0.5, pi3 = 0.5. delta=0.1, 500 seeds.",
            _bern([0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2], [[1, 1, 0, 0, 0, 0, 0], [0, 0, 1, 1, 0, 0, 0]],
                  [0.5, 0.5]), 0.1, 500, {0: 0.5, 2: 0.5}),
        Builtin(
            "fig9-bernoulli",
            "5 Bernoulli arms, mu=(0.8, 0.7, 0.6, 0.5, 0.4), constraints 4pi1 - pi5 <= 1 and "
            "3pi2 - pi4 <= 1. Optimal policy pi1 = 0.25, pi2 = 0.33, pi3 = 0.42. delta=0.1, 500 seeds.",
            _bern([0.8, 0.7, 0.6, 0.5, 0.4], [[4, 0, 0, 0, -1], [0, 3, 0, -1, 0]], [1, 1]), 0.1, 500,
            {0: 0.25, 1: 0.33, 2: 0.42}, 5e-3),
        Builtin(
            "fig10",
            "7 Gaussian arms (sigma^2=1), mu=(2.0, 1.5, 1.45, 0.5, 0.3, -1.0, -1.0), constraints "
            "4pi1 + pi2 <= 0.7 and pi2 + 2pi3 <= 0.5. Optimal policy pi1 = 0.05, pi2 = 0.5, pi4 = 0.45. "
            "delta=1e-4, 1000 seeds.",
            _gauss([2.0, 1.5, 1.45, 0.5, 0.3, -1.0, -1.0], [[4, 1, 0, 0, 0, 0, 0], [0, 1, 2, 0, 0, 0, 0]],
                   [0.7, 0.5]), 1e-4, 1000, {0: 0.05, 1: 0.5, 3: 0.45}),
        Builtin(
            "fig11",
            "6 Gaussian arms (sigma^2=1), mu=[1.0, 0.5, 0.4, 0.3, 0.2, 0.1], constraints "
            "pi1 - pi4 - pi5 - pi6 <= 0.3 and pi2 <= 0.7. Optimal policy pi1 = 0.65, pi4 = 0.35. "
            "delta=1e-3, 1000 seeds.",
            _gauss([1.0, 0.5, 0.4, 0.3, 0.2, 0.1], [[1, 0, 0, -1, -1, -1], [0, 1, 0, 0, 0, 0]], [0.3, 0.7]),
            1e-3, 1000, {0: 0.65, 3: 0.35}),
        Builtin(
            "imdb",
            "12 IMDB movies as Gaussian arms; algorithms assume sigma=1.33, rewards use each movie's "
            "own sigma. At most 0.3 on action, at least 0.3 on drama and on family. Optimal policy "
            "pi1 = 0.3, pi2 = 0.3, pi5 = 0.4. delta=0.1, 500 seeds.",
            _imdb(), 0.1, 500, {0: 0.3, 1: 0.3, 4: 0.4}),
    ]
    return {e.name: e for e in entries}


BUILTINS = _catalog()


class UnknownScenarioError(KeyError):
    def __str__(self):
        return str(self.args[0])


def get_builtin(name: str) -> Builtin:
    try:
        return BUILTINS[name]
    except KeyError:
        close = difflib.get_close_matches(name, list(BUILTINS), n=3, cutoff=0.4)
        hint = f"; did you mean {', '.join(close)}?" if close else ""
        raise UnknownScenarioError(
            f"unknown scenario {name!r}{hint} (available: {', '.join(BUILTINS)})") from None


def with_exploration(problem: Problem, exploration) -> Problem:
    if exploration is None:
        return problem
    return replace(problem, scenario=ExplorationScenario(exploration))


def resolve(name_or_path: str, exploration=None, **overrides) -> ScenarioSpec:
    """Built-in name or path to a problem JSON file -> ScenarioSpec.

    `overrides` may set delta, samplers, n_seeds, base_seed, options.
    """
    path = Path(name_or_path)
    if name_or_path not in BUILTINS and path.suffix == ".json" and path.exists():
        spec = ScenarioSpec(path.stem, load_problem(path))
    else:
        b = get_builtin(name_or_path)
        spec = ScenarioSpec(b.name, b.problem, b.delta, SAMPLERS, b.n_seeds, 0, b.caption)
    spec = replace(spec, problem=with_exploration(spec.problem, exploration))
    clean = {k: v for k, v in overrides.items() if v is not None}
    if "samplers" in clean:
        clean["samplers"] = tuple(clean["samplers"])
        bad = [s for s in clean["samplers"] if s not in SAMPLERS]
        if bad:
            raise ValueError(f"unknown sampler(s) {bad}; choose from {', '.join(SAMPLERS)}")
    return replace(spec, **clean)


def list_scenarios() -> list[tuple[str, str]]:
    return [(b.name, b.caption) for b in BUILTINS.values()]
