"""Exact and Monte-Carlo machinery for the strategy-simplex toy model.

Setting: a symmetric zero-sum game with ``n`` pure strategies; opponents
are drawn uniformly from the standard ``(n-1)``-simplex of mixtures. A
evaluated strategy is summarized by its *pure reward profile*
``r[i] = reward of the evaluated strategy against pure strategy i``.
Against the mixture with weights ``a`` the reward is ``a @ r``, and the
exploited level is the conditional expectation

    EL = E[-a @ r | a @ r <= 0].

For a single-exploiter profile (exactly one ``r[j] < 0``, the rest
``>= 0``) the conditioning region is itself a simplex with one vertex at
``e_j``; ``-a @ r`` is linear, zero on the opposite face and ``-r[j]`` at
``e_j``, so its mean is the value at the region's centroid:

    EL = -r[j] / n = E / n,      P[a @ r <= 0] = prod_i -r[j]/(r[i]-r[j]).

(The often-quoted pyramid-centroid heuristic gives ``E/(n+1)``; that is
the centroid height of the *solid* above the region, not the mean of the
height function over the region, and it does not match direct
integration. Either constant is a fixed multiple of exploitability at
fixed ``n``, which is the property the estimator relies on.)

Also here: executable checkers for the two structural facts the exploited
level rests on — mixing can only hide exploitability (Jensen-style
inequality for distributions over strategies), and near-Nash trajectory
clusters have a small neighborhood estimate ``EL_delta < eps1 + tv * M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .games.matrix import MatrixGame, exploitability, matrix_expected_reward


def sample_uniform_simplex(
    n: int, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Uniform draws from the standard ``(n-1)``-simplex.

    Normalizing ``n`` independent unit-rate exponentials is exact and
    rejection-free. Returns shape ``[n]``, or ``[size, n]`` when ``size``
    is given.
    """
    if n < 2:
        raise ValueError(f"simplex dimension needs n >= 2 coordinates, got {n}")
    g = rng.exponential(1.0, size=(1 if size is None else size, n))
    points = g / g.sum(axis=1, keepdims=True)
    return points[0] if size is None else points


def validate_profile(profile) -> np.ndarray:
    r = np.asarray(profile, dtype=np.float64).reshape(-1)
    if len(r) < 2:
        raise ValueError("reward profile needs at least 2 entries")
    return r


def is_single_exploiter(profile) -> bool:
    r = validate_profile(profile)
    return int(np.sum(r < 0.0)) == 1


@dataclass
class McEstimate:
    value: float
    stderr: float
    conditioning_rate: float
    num_conditioned: int


def el_monte_carlo(profile, samples: int, rng: np.random.Generator) -> McEstimate:
    """Monte-Carlo estimate of ``E[-a @ r | a @ r <= 0]`` under uniform ``a``.

    The conditioning event uses the weak inequality ``<= 0`` (the boundary
    has measure zero). Raises if the profile has no strictly negative
    entry, in which case the event has zero probability.
    """
    r = validate_profile(profile)
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if not np.any(r < 0.0):
        raise ValueError("condition event has zero probability: no entry of the profile is negative")
    points = sample_uniform_simplex(len(r), rng, size=samples)
    values = points @ r
    conditioned = values <= 0.0
    m = int(conditioned.sum())
    if m == 0:
        raise ValueError("no Monte-Carlo sample satisfied the conditioning event")
    losses = -values[conditioned]
    stderr = float(losses.std(ddof=1) / np.sqrt(m)) if m > 1 else float("inf")
    return McEstimate(
        value=float(losses.mean()),
        stderr=stderr,
        conditioning_rate=m / samples,
        num_conditioned=m,
    )


def closed_form_single_exploiter_el(profile) -> tuple[float, float]:
    """Exact ``(EL, conditioning probability)`` for a single-exploiter profile.

    See the module docstring for the derivation: the conditioning region
    is the simplex spanned by the exploited vertex and the zero crossings
    on its edges, and the mean of the linear loss is its centroid value.
    """
    r = validate_profile(profile)
    negative = np.flatnonzero(r < 0.0)
    if len(negative) != 1 or np.any(np.delete(r, negative[0]) < 0.0):
        raise ValueError("profile must have exactly one strictly negative entry")
    j = int(negative[0])
    n = len(r)
    el = -r[j] / n
    prob = 1.0
    for i in range(n):
        if i != j:
            prob *= -r[j] / (r[i] - r[j])
    return float(el), float(prob)


@dataclass
class ProportionalityRow:
    profile: np.ndarray
    exploitability: float
    el: float
    el_stderr: float
    ratio: float
    ratio_stderr: float


@dataclass
class ProportionalityResult:
    rows: list[ProportionalityRow]
    mean_ratio: float
    max_relative_spread: float
    consistent: bool


def proportionality_check(
    profiles, samples: int, seed: int, sigmas: float = 3.0
) -> ProportionalityResult:
    """Measure EL / exploitability across single-exploiter profiles.

    All profiles are evaluated on identical simplex draws (common random
    numbers via a shared seed), which makes the ratio comparison
    conservative. ``consistent`` is true when every ratio sits within
    ``sigmas`` combined standard errors of the precision-weighted mean.
    """
    rows: list[ProportionalityRow] = []
    for profile in profiles:
        r = validate_profile(profile)
        if not is_single_exploiter(r):
            raise ValueError(f"profile {r} is not single-exploiter")
        e = float(np.max(-r))
        if e <= 0.0:
            raise ValueError(f"profile {r} has no strictly positive exploitability")
        est = el_monte_carlo(r, samples, np.random.default_rng(seed))
        rows.append(
            ProportionalityRow(
                profile=r,
                exploitability=e,
                el=est.value,
                el_stderr=est.stderr,
                ratio=est.value / e,
                ratio_stderr=est.stderr / e,
            )
        )
    ratios = np.array([row.ratio for row in rows])
    errs = np.array([row.ratio_stderr for row in rows])
    weights = 1.0 / np.maximum(errs, 1e-300) ** 2
    mean_ratio = float(np.sum(weights * ratios) / np.sum(weights))
    mean_err = float(np.sqrt(1.0 / np.sum(weights)))
    consistent = bool(
        np.all(np.abs(ratios - mean_ratio) <= sigmas * np.sqrt(errs**2 + mean_err**2))
    )
    spread = float((ratios.max() - ratios.min()) / mean_ratio) if mean_ratio else float("inf")
    return ProportionalityResult(rows, mean_ratio, spread, consistent)


def mixture_strategy(support, distribution) -> np.ndarray:
    """Convex combination of mixed strategies: ``sum_k tau_k * pi_k``."""
    support = np.asarray(support, dtype=np.float64)
    tau = np.asarray(distribution, dtype=np.float64)
    if support.ndim != 2 or len(tau) != len(support):
        raise ValueError(
            f"support shape {support.shape} does not match distribution of length {len(tau)}"
        )
    return tau @ support


def check_mixture_exploitability_bound(
    game: MatrixGame, support, distribution, tol: float = 1e-9
) -> tuple[float, float, bool]:
    """Mean exploitability over a strategy distribution vs. the mixture's.

    Returns ``(lhs, rhs, holds)`` where ``lhs = sum_k tau_k E(pi_k)``,
    ``rhs = E(sum_k tau_k pi_k)`` and ``holds = lhs >= rhs - tol``. A
    point mass makes the two sides equal; mixing can only lower the
    right-hand side.
    """
    support = np.asarray(support, dtype=np.float64)
    tau = np.asarray(distribution, dtype=np.float64)
    lhs = float(
        sum(t * exploitability(game, pi) for t, pi in zip(tau, support) if t > 0.0)
    )
    rhs = exploitability(game, mixture_strategy(support, tau))
    return lhs, rhs, bool(lhs >= rhs - tol)


@dataclass
class NearNashBoundResult:
    epsilon1: float
    tv_gap: float
    max_exploit: float
    bound: float
    worst_negative_reward: float
    el_delta: float | None
    holds: bool


def check_near_nash_el_bound(
    game: MatrixGame,
    support,
    tau1,
    tau2,
    exploiters,
    tol: float = 1e-9,
) -> NearNashBoundResult:
    """Near-Nash neighborhoods have a bounded exploited-level estimate.

    ``tau1`` and ``tau2`` are distributions over the finite ``support``
    (integrals become sums, so the premises are verified exactly):

      * ``eps1`` is the computed exploitability of ``tau1``'s mixture,
      * the total-variation surrogate is ``tv = sum_k |tau1_k - tau2_k|``,
      * ``M`` bounds how much any pure strategy can exploit another
        strategy (the max absolute payoff entry).

    Verifies ``r(pi_hat, mixture(tau2)) >= -eps1 - tv * M`` for every
    tested exploiter (all pure strategies plus the given ones), and that
    the neighborhood estimate built from those rewards respects
    ``EL_delta <= eps1 + tv * M``.
    """
    support = np.asarray(support, dtype=np.float64)
    t1 = np.asarray(tau1, dtype=np.float64)
    t2 = np.asarray(tau2, dtype=np.float64)
    mixture1 = mixture_strategy(support, t1)
    mixture2 = mixture_strategy(support, t2)
    epsilon1 = exploitability(game, mixture1)
    tv = float(np.sum(np.abs(t1 - t2)))
    m_bound = float(np.max(np.abs(game.payoff)))
    bound = epsilon1 + tv * m_bound

    n = game.num_actions
    tested = [np.eye(n)[i] for i in range(n)] + [np.asarray(e, dtype=np.float64) for e in exploiters]
    # r(pi_hat, pi(tau2)): reward of the evaluated mixture against the exploiter.
    rewards = np.array(
        [matrix_expected_reward(game, mixture2, pi_hat) for pi_hat in tested]
    )
    worst = float(np.max(-rewards))
    losing = rewards <= 0.0
    el_delta = (
        float(np.sum(np.maximum(-rewards, 0.0)) / losing.sum()) if losing.any() else None
    )
    holds = worst <= bound + tol and (el_delta is None or el_delta <= bound + tol)
    return NearNashBoundResult(
        epsilon1=epsilon1,
        tv_gap=tv,
        max_exploit=m_bound,
        bound=bound,
        worst_negative_reward=worst,
        el_delta=el_delta,
        holds=holds,
    )


def random_antisymmetric_game(n: int, rng: np.random.Generator, scale: float = 1.0) -> MatrixGame:
    a = rng.normal(0.0, scale, size=(n, n))
    return MatrixGame(a - a.T)


def random_mixture_bound_instance(rng: np.random.Generator):
    """A random (game, support, distribution) triple for the sweep."""
    n = int(rng.integers(2, 6))
    game = random_antisymmetric_game(n, rng)
    k = int(rng.integers(1, 7))
    support = sample_uniform_simplex(n, rng, size=k)
    distribution = sample_uniform_simplex(k, rng) if k >= 2 else np.ones(1)
    return game, support, distribution


def random_near_nash_instance(rng: np.random.Generator):
    """A random finite-support instance plus perturbed sibling distribution."""
    n = int(rng.integers(2, 6))
    game = random_antisymmetric_game(n, rng)
    k = int(rng.integers(2, 7))
    support = sample_uniform_simplex(n, rng, size=k)
    tau1 = sample_uniform_simplex(k, rng)
    # Perturb toward another distribution to get a controlled TV gap.
    other = sample_uniform_simplex(k, rng)
    step = rng.uniform(0.0, 0.5)
    tau2 = (1.0 - step) * tau1 + step * other
    exploiters = [sample_uniform_simplex(n, rng) for _ in range(3)]
    return game, support, tau1, tau2, exploiters
