"""Variational GAN objectives.

Donsker-Varadhan KL and f-GAN forms for KL and Jensen-Shannon, their
convex conjugates, the domain-respecting output activation for JS, and
the weighted sum of per-family objectives used by graph-informed
training.  Everything here is pure score-space math: batches in,
objective values and exact score gradients out.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ShapeMismatch

__all__ = [
    "LOG2",
    "HALF_LOG2",
    "FKind",
    "ObjectiveForm",
    "f_value",
    "f_prime",
    "f_star",
    "f_star_prime",
    "js_domain_activation",
    "js_domain_activation_backward",
    "logmeanexp",
    "dv_kl_objective",
    "fgan_objective",
    "objective_on_scores",
    "GraphObjective",
    "graph_informed_objective",
]

LOG2 = float(np.log(2.0))
HALF_LOG2 = 0.5 * LOG2

# Guard band below the JS conjugate's domain boundary: within ~6e-17 of
# the boundary, 2 - e^{2s} rounds to zero and the conjugate overflows,
# so anything this close is treated as out of domain.
_JS_DOMAIN_GUARD = 1e-12


class FKind(enum.Enum):
    """Generator function selecting the f-divergence."""

    KL = "kl"
    JS = "js"


class ObjectiveForm(enum.Enum):
    """Variational objective used for training and evaluation."""

    DV_KL = "dv_kl"
    FGAN_KL = "fgan_kl"
    FGAN_JS = "fgan_js"

    @property
    def fkind(self) -> FKind:
        return FKind.JS if self is ObjectiveForm.FGAN_JS else FKind.KL

    @classmethod
    def from_string(cls, name: str) -> "ObjectiveForm":
        for form in cls:
            if form.value == name:
                return form
        raise ValueError(f"unknown objective form {name!r}")


# ---------------------------------------------------------------------------
# f, f', f*, (f*)'
# ---------------------------------------------------------------------------

def f_value(kind: FKind, t):
    """f(t) with f(0) taken as the limit (0 for KL, log(2)/2 for JS)."""
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is FKind.KL:
            out = np.where(t > 0.0, t * np.log(np.where(t > 0.0, t, 1.0)), 0.0)
        else:
            tlogt = np.where(t > 0.0, t * np.log(np.where(t > 0.0, t, 1.0)), 0.0)
            out = 0.5 * (tlogt - (t + 1.0) * np.log(0.5 * (t + 1.0)))
    return out if out.ndim else float(out)


def f_prime(kind: FKind, t):
    """f'(t) for t > 0 (KL: log t + 1; JS: log(2t/(1+t))/2)."""
    t = np.asarray(t, dtype=np.float64)
    if kind is FKind.KL:
        out = np.log(t) + 1.0
    else:
        out = 0.5 * np.log(2.0 * t / (1.0 + t))
    return out if out.ndim else float(out)


def f_star(kind: FKind, s):
    """Legendre-Fenchel conjugate of ``f_value``'s generators.

    KL: f*(s) = e^{s-1}.  JS: the generator carries a 1/2 factor (so the
    divergence is bounded by log 2), and its exact conjugate is
    f*(s) = -log(2 - e^{2s})/2 with effective domain s < log(2)/2.
    Scores at or above the domain boundary raise ``DomainError``.
    """
    s = np.asarray(s, dtype=np.float64)
    if kind is FKind.KL:
        out = np.exp(s - 1.0)
    else:
        if np.any(s >= HALF_LOG2 - _JS_DOMAIN_GUARD):
            raise DomainError("JS conjugate requires scores below log(2)/2")
        out = -0.5 * np.log(2.0 - np.exp(2.0 * s))
    return out if out.ndim else float(out)


def f_star_prime(kind: FKind, s):
    """(f*)'(s): e^{s-1} for KL, e^{2s}/(2-e^{2s}) for JS."""
    s = np.asarray(s, dtype=np.float64)
    if kind is FKind.KL:
        out = np.exp(s - 1.0)
    else:
        if np.any(s >= HALF_LOG2 - _JS_DOMAIN_GUARD):
            raise DomainError("JS conjugate requires scores below log(2)/2")
        e = np.exp(2.0 * s)
        out = e / (2.0 - e)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Output activation keeping JS critic scores inside dom(f*)
# ---------------------------------------------------------------------------

def js_domain_activation(v):
    """(log 2 - softplus(-v))/2 = log(2 sigmoid(v))/2: range (-inf, log(2)/2).

    Squashes raw critic outputs into the effective domain of the JS
    conjugate; strictly increasing, zero at zero, supremum log(2)/2
    approached but never attained.
    """
    v = np.asarray(v, dtype=np.float64)
    out = 0.5 * (LOG2 - np.logaddexp(0.0, -v))
    return out if out.ndim else float(out)


def js_domain_activation_backward(v):
    """Derivative of js_domain_activation: sigmoid(-v)/2."""
    v = np.asarray(v, dtype=np.float64)
    out = 0.5 / (1.0 + np.exp(v))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Objective forms on score batches
# ---------------------------------------------------------------------------

def logmeanexp(a: np.ndarray) -> float:
    """Max-shifted log of the mean exponential."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ShapeMismatch("logmeanexp of an empty array")
    amax = float(np.max(a))
    return amax + float(np.log(np.mean(np.exp(a - amax))))


def dv_kl_objective(real_scores, fake_scores):
    """Donsker-Varadhan objective mean(real) - logmeanexp(fake).

    Returns ``(value, grad_real, grad_fake)`` with exact gradients in
    each score entry.  The inner shift of the variational form is
    absorbed analytically, which makes the value invariant to adding a
    common constant to all scores.
    """
    r = np.asarray(real_scores, dtype=np.float64)
    g = np.asarray(fake_scores, dtype=np.float64)
    if r.size == 0 or g.size == 0:
        raise ShapeMismatch("scores must be nonempty")
    gmax = float(np.max(g))
    e = np.exp(g - gmax)
    total = float(np.sum(e))
    value = float(np.mean(r)) - (gmax + float(np.log(total / g.size)))
    grad_real = np.full_like(r, 1.0 / r.size)
    grad_fake = -e / total
    return value, grad_real, grad_fake


def fgan_objective(kind: FKind, real_scores, fake_scores):
    """f-GAN objective mean(real) - mean(f*(fake)) with exact gradients.

    Scores must already lie in dom(f*) (identity activation for KL,
    the JS domain activation for JS).
    """
    r = np.asarray(real_scores, dtype=np.float64)
    g = np.asarray(fake_scores, dtype=np.float64)
    if r.size == 0 or g.size == 0:
        raise ShapeMismatch("scores must be nonempty")
    value = float(np.mean(r)) - float(np.mean(f_star(kind, g)))
    grad_real = np.full_like(r, 1.0 / r.size)
    grad_fake = -np.asarray(f_star_prime(kind, g), dtype=np.float64) / g.size
    return value, grad_real, grad_fake


def objective_on_scores(form: ObjectiveForm, real_raw, fake_raw):
    """Evaluate an objective form on raw critic outputs.

    Applies the form's output activation (identity for DV-KL and
    f-GAN-KL, the JS domain activation for f-GAN-JS), then the
    variational objective.  Returns ``(value, grad_real_raw,
    grad_fake_raw)`` — gradients with respect to the raw outputs, so
    critic backprop can consume them directly.
    """
    real_raw = np.asarray(real_raw, dtype=np.float64)
    fake_raw = np.asarray(fake_raw, dtype=np.float64)
    if form is ObjectiveForm.DV_KL:
        return dv_kl_objective(real_raw, fake_raw)
    if form is ObjectiveForm.FGAN_KL:
        return fgan_objective(FKind.KL, real_raw, fake_raw)
    if real_raw.size == 0 or fake_raw.size == 0:
        raise ShapeMismatch("scores must be nonempty")
    # JS with its domain activation, composed analytically: with
    # a(v) = log(2 sigmoid(v))/2 one has f*(a(v)) = (softplus(v)-log 2)/2,
    # so the objective is finite for every finite raw score (applying the
    # activation and conjugate in two steps overflows once the activated
    # score rounds onto the domain boundary).
    value = float(
        np.mean(0.5 * (LOG2 - np.logaddexp(0.0, -real_raw)))
        - np.mean(0.5 * (np.logaddexp(0.0, fake_raw) - LOG2))
    )
    g_real = 0.5 / (1.0 + np.exp(real_raw)) / real_raw.size
    g_fake = -0.5 / (1.0 + np.exp(-fake_raw)) / fake_raw.size
    return value, g_real, g_fake


# ---------------------------------------------------------------------------
# Weighted sum of per-family objectives
# ---------------------------------------------------------------------------

@dataclass
class GraphObjective:
    """Weighted graph-informed objective with per-family breakdown.

    ``real_caches``/``fake_caches`` are the critic forward caches and
    ``real_grads``/``fake_grads`` the objective gradients with respect
    to the raw critic outputs, already scaled by the family weights —
    ready for critic and generator backprop.
    """

    value: float
    per_family: np.ndarray
    real_caches: list
    fake_caches: list
    real_grads: list
    fake_grads: list


def graph_informed_objective(
    form: ObjectiveForm,
    critics: Sequence,
    real: np.ndarray,
    fake: np.ndarray,
    family_columns: Sequence[np.ndarray],
    weights: Sequence[float],
    forward: Callable,
) -> GraphObjective:
    """Sum of weighted per-family objectives over column-sliced batches.

    This function is the single choke point through which critics see
    data: critic ``i`` receives exactly the columns of its family from
    both batches, and nothing else.  ``forward`` is the network forward
    function (injected to keep this module free of network internals).
    """
    if len(critics) != len(family_columns) or len(critics) != len(weights):
        raise ShapeMismatch(
            f"{len(critics)} critics, {len(family_columns)} families, "
            f"{len(weights)} weights"
        )
    if real.shape[1] != fake.shape[1]:
        raise ShapeMismatch("real and fake batches disagree on column count")

    per_family = np.zeros(len(critics))
    real_caches, fake_caches, real_grads, fake_grads = [], [], [], []
    total = 0.0
    for i, critic in enumerate(critics):
        cols = np.asarray(family_columns[i], dtype=np.int64)
        r_out, r_cache = forward(critic, real[:, cols])
        g_out, g_cache = forward(critic, fake[:, cols])
        value, dr, dg = objective_on_scores(form, r_out.ravel(), g_out.ravel())
        w = float(weights[i])
        per_family[i] = value
        total += w * value
        real_caches.append(r_cache)
        fake_caches.append(g_cache)
        real_grads.append(w * dr.reshape(-1, 1))
        fake_grads.append(w * dg.reshape(-1, 1))
    return GraphObjective(
        value=total,
        per_family=per_family,
        real_caches=real_caches,
        fake_caches=fake_caches,
        real_grads=real_grads,
        fake_grads=fake_grads,
    )
