"""Gamma-Poisson matrix factorization fit by coordinate ascent.

Counts factorize as y_dv ~ Pois(sum_k theta_dk beta_kv) with Gamma(a, b)
priors on both factors. The conjugate multinomial augmentation gives
closed-form sweeps:

    phi_dvk  propto  exp(E[log theta_dk] + E[log beta_kv])
    q(theta_dk) = Gamma(a + sum_v y_dv phi_dvk,  b + sum_v E[beta_kv])
    q(beta_kv)  = Gamma(a + sum_d y_dv phi_dvk,  b + sum_d E[theta_dk])

phi only needs evaluating on the stored nonzeros. Each sweep can only
increase the augmented-model objective, which `pf_elbo` evaluates with phi
at its closed-form optimum. Used to initialize the text ideal point model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, logsumexp


@dataclass
class GammaFamily:
    """Independent Gamma factors with elementwise shape and rate."""

    shape: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        self.shape = np.asarray(self.shape, dtype=np.float64)
        self.rate = np.asarray(self.rate, dtype=np.float64)
        if self.shape.shape != self.rate.shape:
            raise ValueError("shape and rate arrays must match")
        if np.any(self.shape <= 0) or np.any(self.rate <= 0):
            raise ValueError("Gamma parameters must be positive")

    def mean(self):
        return self.shape / self.rate

    def expected_log(self):
        return digamma(self.shape) - np.log(self.rate)


@dataclass
class PFState:
    """Variational Gamma factors for intensities (D x K) and topics (K x V)."""

    q_theta: GammaFamily
    q_beta: GammaFamily
    prior_shape: float
    prior_rate: float


def init_state(num_docs, num_terms, num_topics, a, b, rng):
    """Random positive initialization: prior plus Uniform(0, 1) jitter."""
    q_theta = GammaFamily(
        a + rng.uniform(size=(num_docs, num_topics)),
        b + rng.uniform(size=(num_docs, num_topics)),
    )
    q_beta = GammaFamily(
        a + rng.uniform(size=(num_topics, num_terms)),
        b + rng.uniform(size=(num_topics, num_terms)),
    )
    return PFState(q_theta, q_beta, float(a), float(b))


def _phi(state, rows, cols):
    """Responsibilities over topics for each stored nonzero, rows sum to 1."""
    scores = state.q_theta.expected_log()[rows] + state.q_beta.expected_log().T[cols]
    scores -= scores.max(axis=1, keepdims=True)
    phi = np.exp(scores)
    phi /= phi.sum(axis=1, keepdims=True)
    return phi


def cavi_step(state, corpus):
    """One full coordinate sweep; returns a new PFState."""
    rows, cols, y = corpus.entries()
    num_docs, num_terms = corpus.counts.shape
    num_topics = state.q_theta.shape.shape[1]
    a, b = state.prior_shape, state.prior_rate

    phi = _phi(state, rows, cols)
    weighted = y[:, None] * phi

    theta_shape = np.empty((num_docs, num_topics))
    for k in range(num_topics):
        theta_shape[:, k] = a + np.bincount(rows, weights=weighted[:, k], minlength=num_docs)
    theta_rate = np.broadcast_to(
        b + state.q_beta.mean().sum(axis=1), (num_docs, num_topics)
    ).copy()
    q_theta = GammaFamily(theta_shape, theta_rate)

    beta_shape = np.empty((num_topics, num_terms))
    for k in range(num_topics):
        beta_shape[k] = a + np.bincount(cols, weights=weighted[:, k], minlength=num_terms)
    beta_rate = np.broadcast_to(
        (b + q_theta.mean().sum(axis=0))[:, None], (num_topics, num_terms)
    ).copy()
    q_beta = GammaFamily(beta_shape, beta_rate)
    return PFState(q_theta, q_beta, a, b)


def _gamma_prior_entropy(fam, a, b):
    """E_q[log p] + H(q) summed over one block of Gamma factors."""
    elog = fam.expected_log()
    prior = np.sum(a * np.log(b) - gammaln(a) + (a - 1.0) * elog - b * fam.mean())
    entropy = np.sum(
        fam.shape
        - np.log(fam.rate)
        + gammaln(fam.shape)
        + (1.0 - fam.shape) * digamma(fam.shape)
    )
    return float(prior + entropy)


def pf_elbo(state, corpus):
    """Augmented-model objective with responsibilities at their optimum."""
    rows, cols, y = corpus.entries()
    a, b = state.prior_shape, state.prior_rate
    value = _gamma_prior_entropy(state.q_theta, a, b)
    value += _gamma_prior_entropy(state.q_beta, a, b)
    # Expected rate over all cells factorizes across topics.
    value -= float(
        state.q_theta.mean().sum(axis=0) @ state.q_beta.mean().sum(axis=1)
    )
    if len(y):
        scores = (
            state.q_theta.expected_log()[rows] + state.q_beta.expected_log().T[cols]
        )
        value += float(np.sum(y * logsumexp(scores, axis=1)) - np.sum(gammaln(y + 1.0)))
    return value


def pretrain(corpus, num_topics, a=0.3, b=0.3, sweeps=100, seed=0, tol=1e-6):
    """Initial estimates of intensities (D x K) and topics (K x V).

    Sweeps stop early once the relative objective change drops below `tol`.
    Returns posterior means, strictly positive.
    """
    if num_topics < 1:
        raise ValueError("num_topics must be >= 1")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    rng = np.random.default_rng(seed)
    state = init_state(corpus.num_docs, corpus.num_terms, num_topics, a, b, rng)
    prev = None
    for _ in range(sweeps):
        state = cavi_step(state, corpus)
        value = pf_elbo(state, corpus)
        if prev is not None and abs(value - prev) <= tol * abs(prev):
            break
        prev = value
    return state.q_theta.mean(), state.q_beta.mean()
