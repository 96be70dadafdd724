"""Learning-rate policies: fixed, epoch decay, optimal schedule and Polyak variants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

POLICY_KINDS = ("fixed", "epoch", "scheduled", "polyak", "splr", "splr-est")

# relative slack for f(x) - f* round-off before it counts as an overestimate
F_ROUNDOFF = 1e-13


class Converged(Exception):
    """The gradient vanished; there is no step to take."""


class FStarOverestimate(ValueError):
    """``f(x) < f_star``: the supplied minimum value is too high."""

    def __init__(self, f_x: float, f_star: float):
        super().__init__(f"f(x)={f_x!r} is below f_star={f_star!r}")
        self.f_x = f_x
        self.f_star = f_star


class NonpositiveSecondMoment(ValueError):
    pass


class MissingContext(KeyError):
    pass


@dataclass(frozen=True)
class Caps:
    h_min: float = 0.0
    h_max: float = math.inf

    def __post_init__(self):
        if not 0 <= self.h_min <= self.h_max:
            raise ValueError("caps need 0 <= h_min <= h_max")

    def apply(self, h: float) -> float:
        return min(max(h, self.h_min), self.h_max)


@dataclass(frozen=True)
class StepPolicy:
    """A learning-rate rule.

    ``kind`` is one of :data:`POLICY_KINDS`; ``params`` holds the
    variant-specific values (``h0``, ``decay_factor``, ``decay_period``,
    ``mu``, ``q0``, ``alpha_s``, ``f_star``, ``refresh``, ``gamma0``,
    ``gamma_p``).  Use the classmethod constructors rather than building
    ``params`` by hand.
    """

    kind: str
    params: dict = field(default_factory=dict)
    caps: Caps | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}")

    @classmethod
    def fixed(cls, h0: float, caps=None):
        if h0 <= 0:
            raise ValueError("h0 must be positive")
        return cls("fixed", {"h0": h0}, caps)

    @classmethod
    def epoch_decay(cls, h0: float, factor: float, period: int, caps=None):
        if h0 <= 0 or factor < 1 or period < 1:
            raise ValueError("need h0 > 0, factor >= 1, period >= 1")
        return cls("epoch", {"h0": h0, "decay_factor": factor, "decay_period": int(period)}, caps)

    @classmethod
    def scheduled(cls, mu: float, q0: float, alpha_s: float, caps=None):
        if mu <= 0 or q0 <= 0 or alpha_s <= 0:
            raise ValueError("scheduled policy needs mu, q0, alpha_s > 0")
        return cls("scheduled", {"mu": mu, "q0": q0, "alpha_s": alpha_s}, caps)

    @classmethod
    def polyak(cls, f_star: float, caps=None):
        _check_finite(f_star)
        return cls("polyak", {"f_star": f_star}, caps)

    @classmethod
    def splr(cls, f_star: float, refresh: int = 1, caps=None):
        _check_finite(f_star)
        if refresh < 1:
            raise ValueError("refresh period must be >= 1")
        return cls("splr", {"f_star": f_star, "refresh": int(refresh)}, caps)

    @classmethod
    def splr_estimated(cls, gamma0: float = 1.0, gamma_p: float = 0.5, caps=None):
        if gamma0 <= 0 or not 0 < gamma_p <= 1:
            raise ValueError("need gamma0 > 0 and 0 < gamma_p <= 1")
        return cls("splr-est", {"gamma0": gamma0, "gamma_p": gamma_p}, caps)


def default_caps(mu: float | None = None) -> Caps:
    """Caps used for the stochastic Polyak rules when none are given."""
    return Caps(1e-8, 1.0 / mu if mu else 10.0)


def _check_finite(v):
    if v is None or not math.isfinite(v):
        raise ValueError("f_star must be finite")


def _polyak_gap(f_x: float, f_star: float) -> float:
    gap = f_x - f_star
    if gap < 0:
        if -gap > F_ROUNDOFF * max(1.0, abs(f_star)):
            raise FStarOverestimate(f_x, f_star)
        gap = 0.0
    return gap


def _capped(h: float, caps: Caps | None) -> float:
    return caps.apply(h) if caps is not None else h


def plr(f_x: float, f_star: float, grad_norm_sq: float, caps: Caps | None = None) -> float:
    """Deterministic Polyak rate ``2 (f(x) - f*) / ||grad f(x)||^2``."""
    if grad_norm_sq <= 0:
        raise Converged("gradient norm is zero")
    return _capped(2.0 * _polyak_gap(f_x, f_star) / grad_norm_sq, caps)


def splr(f_x: float, f_star: float, second_moment: float, caps: Caps | None = None) -> float:
    """Stochastic Polyak rate using ``E ||grad_mb f(x)||^2`` in the denominator."""
    if not second_moment > 0:
        raise NonpositiveSecondMoment(f"second moment must be positive, got {second_moment!r}")
    return _capped(2.0 * _polyak_gap(f_x, f_star) / second_moment, caps)


def slr(mu: float, q0: float, alpha_s: float, k: int) -> float:
    """Optimal O(1/k) schedule ``1 / (mu (k + 1/(q0 alpha_s)))``."""
    if mu <= 0 or q0 <= 0 or alpha_s <= 0:
        raise ValueError("mu, q0 and alpha_s must be positive")
    if k < 0:
        raise ValueError("k must be non-negative")
    return 1.0 / (mu * (k + 1.0 / (q0 * alpha_s)))


@dataclass(frozen=True)
class EstimatorState:
    """Running best value for the f*-free Polyak rule."""

    f_best: float = math.inf
    k: int = 0


def gamma(k: int, gamma0: float = 1.0, p: float = 0.5) -> float:
    return gamma0 / (k + 1) ** p


def estimated_polyak(f_x: float, state: EstimatorState, grad_norm_sq: float,
                     gamma0: float = 1.0, gamma_p: float = 0.5) -> tuple[float, EstimatorState]:
    """Polyak step with ``f*`` replaced by ``f_best - gamma_k``.

    Returns the step and the advanced state; ``state`` itself is untouched.
    """
    if grad_norm_sq <= 0:
        raise Converged("gradient norm is zero")
    f_best = min(state.f_best, f_x)
    h = (f_x - f_best + gamma(state.k, gamma0, gamma_p)) / grad_norm_sq
    return h, EstimatorState(f_best, state.k + 1)


@dataclass
class StepContext:
    """Quantities available to a policy at iteration ``k``.

    ``second_moment`` may be a number or a zero-argument callable; callables
    are only invoked when the policy actually needs a fresh value.
    """

    k: int
    f_x: float | None = None
    grad_norm_sq: float | None = None
    second_moment: float | Callable[[], float] | None = None
    epoch: int | None = None


@dataclass(frozen=True)
class PolicyState:
    estimator: EstimatorState = EstimatorState()
    cached_moment: float | None = None


def _need(ctx: StepContext, name: str):
    v = getattr(ctx, name)
    if v is None:
        raise MissingContext(name)
    if callable(v):
        v = v()
    return v


def compute_h(policy: StepPolicy, ctx: StepContext,
              state: PolicyState | None = None) -> tuple[float, PolicyState]:
    """Learning rate for ``policy`` at ``ctx``; caps are applied last.

    ``state`` carries the f_best estimator and the cached second moment for
    rules that refresh it periodically.  Stateless rules return it as given.
    """
    state = state or PolicyState()
    p = policy.params
    kind = policy.kind
    if kind == "fixed":
        h = p["h0"]
    elif kind == "epoch":
        step = ctx.epoch if ctx.epoch is not None else ctx.k
        h = p["h0"] / p["decay_factor"] ** (step // p["decay_period"])
    elif kind == "scheduled":
        for key in ("mu", "q0", "alpha_s"):
            if p.get(key) is None:
                raise MissingContext(key)
        h = slr(p["mu"], p["q0"], p["alpha_s"], ctx.k)
    elif kind == "polyak":
        h = plr(_need(ctx, "f_x"), p["f_star"], _need(ctx, "grad_norm_sq"))
    elif kind == "splr":
        f_x = _need(ctx, "f_x")
        if state.cached_moment is None or ctx.k % p.get("refresh", 1) == 0:
            state = replace(state, cached_moment=_need(ctx, "second_moment"))
        h = splr(f_x, p["f_star"], state.cached_moment)
    else:  # splr-est
        f_x = _need(ctx, "f_x")
        moment = ctx.second_moment if ctx.second_moment is not None else ctx.grad_norm_sq
        if moment is None:
            raise MissingContext("second_moment")
        moment = moment() if callable(moment) else moment
        h, est = estimated_polyak(f_x, state.estimator, moment, p["gamma0"], p["gamma_p"])
        state = replace(state, estimator=est)
    return _capped(h, policy.caps), state
