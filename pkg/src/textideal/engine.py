"""Reparameterized variational inference engine.

Mean-field states mix Gaussian factors (real latents) and lognormal factors
(positive latents), both parameterized by a location and an unconstrained
log-scale. A single noise draw z per factor gives the sample

    Gaussian:   s = mu + sigma * z
    lognormal:  s = exp(mu + sigma * z),   sigma = exp(log_sigma)

and the single-draw objective estimate

    elbo(z) = log p(s) + (N / |batch|) * loglik(batch | s) - log q(s).

Gradients are exact derivatives of that estimate with z held fixed: models
supply d loglik / d sample and the engine applies the chain rule through the
reparameterization, the priors and the entropy term. `finite_difference`
provides the independent check. Updates use Adam (gradient ascent).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

LOG_2PI = math.log(2.0 * math.pi)


class NonFiniteElbo(Exception):
    """The objective estimate became NaN or infinite during optimization."""

    def __init__(self, step, value=None):
        self.step = step
        self.value = value
        super().__init__(f"non-finite objective estimate at step {step}: {value}")


# ---------------------------------------------------------------------------
# Variational families
# ---------------------------------------------------------------------------


class GaussianFamily:
    """Elementwise Gaussian factors N(mu, exp(log_sigma)^2)."""

    positive = False

    def __init__(self, mu, log_sigma):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.log_sigma = np.asarray(log_sigma, dtype=np.float64)
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError("mu and log_sigma must have identical shapes")

    @property
    def sigma(self):
        return np.exp(self.log_sigma)

    def sample(self, z):
        z = np.asarray(z)
        if z.shape != self.mu.shape:
            raise ValueError(f"noise shape {z.shape} != parameter shape {self.mu.shape}")
        return self.mu + self.sigma * z

    def sample_partials(self, z, s):
        """(d s / d mu, d s / d log_sigma) at the reparameterized sample."""
        return np.ones_like(self.mu), z * self.sigma

    def log_density(self, s):
        t = (s - self.mu) / self.sigma
        return float(np.sum(-0.5 * LOG_2PI - self.log_sigma - 0.5 * t * t))

    def log_density_reparam(self, z):
        """log q at the reparameterized sample; (s - mu)/sigma collapses to z."""
        return float(np.sum(-0.5 * LOG_2PI - self.log_sigma - 0.5 * z * z))

    def log_density_grads(self, z):
        """Total d log q(s(phi, z)) / d phi with z fixed: (d mu, d log_sigma)."""
        return np.zeros_like(self.mu), -np.ones_like(self.log_sigma)

    def posterior_mean(self):
        return self.mu.copy()


class LogNormalFamily:
    """Elementwise lognormal factors: exp of a Gaussian in log space."""

    positive = True

    def __init__(self, mu, log_sigma):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.log_sigma = np.asarray(log_sigma, dtype=np.float64)
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError("mu and log_sigma must have identical shapes")

    @property
    def sigma(self):
        return np.exp(self.log_sigma)

    def sample(self, z):
        z = np.asarray(z)
        if z.shape != self.mu.shape:
            raise ValueError(f"noise shape {z.shape} != parameter shape {self.mu.shape}")
        return np.exp(self.mu + self.sigma * z)

    def sample_partials(self, z, s):
        return s, s * z * self.sigma

    def log_density(self, s):
        if np.any(s <= 0):
            raise ValueError("lognormal density evaluated at a nonpositive point")
        ls = np.log(s)
        t = (ls - self.mu) / self.sigma
        # -log(s) is the Jacobian of the log transform.
        return float(np.sum(-0.5 * LOG_2PI - self.log_sigma - ls - 0.5 * t * t))

    def log_density_reparam(self, z):
        return float(
            np.sum(
                -0.5 * LOG_2PI
                - self.log_sigma
                - (self.mu + self.sigma * z)
                - 0.5 * z * z
            )
        )

    def log_density_grads(self, z):
        # log q(s(z)) = -log_sigma - (mu + sigma z) - z^2/2 - log(2 pi)/2
        return -np.ones_like(self.mu), -1.0 - z * self.sigma

    def posterior_mean(self):
        return np.exp(self.mu + 0.5 * self.sigma**2)


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


class GammaPrior:
    """Independent Gamma(shape, rate) prior on a positive latent array."""

    def __init__(self, shape, rate):
        if shape <= 0 or rate <= 0:
            raise ValueError("Gamma prior needs positive shape and rate")
        self.shape = float(shape)
        self.rate = float(rate)

    def log_prob(self, s):
        if np.any(s <= 0):
            raise ValueError("nonpositive sample under a Gamma prior")
        a, b = self.shape, self.rate
        return float(
            np.sum(a * math.log(b) - gammaln(a) + (a - 1.0) * np.log(s) - b * s)
        )

    def dlog_prob(self, s):
        return (self.shape - 1.0) / s - self.rate


class NormalPrior:
    """Independent N(0, scale^2) prior on a real latent array."""

    def __init__(self, scale=1.0):
        if scale <= 0:
            raise ValueError("Normal prior needs a positive scale")
        self.scale = float(scale)

    def log_prob(self, s):
        var = self.scale**2
        return float(
            np.sum(-0.5 * LOG_2PI - math.log(self.scale) - 0.5 * s * s / var)
        )

    def dlog_prob(self, s):
        return -s / self.scale**2


# ---------------------------------------------------------------------------
# Variational state
# ---------------------------------------------------------------------------


class VariationalState:
    """Named mean-field factors paired with their priors."""

    def __init__(self, families, priors):
        if set(families) != set(priors):
            raise ValueError("families and priors must share the same names")
        self.families = dict(families)
        self.priors = dict(priors)
        self.names = list(families)

    def sample_noise(self, rng):
        """One standard-normal draw per factor, shaped like its parameters."""
        return {
            name: rng.standard_normal(fam.mu.shape)
            for name, fam in self.families.items()
        }

    def reparameterize(self, noise):
        return {name: self.families[name].sample(noise[name]) for name in self.names}

    def parameters(self):
        """Live parameter arrays keyed by '<name>.mu' / '<name>.log_sigma'."""
        params = {}
        for name, fam in self.families.items():
            params[f"{name}.mu"] = fam.mu
            params[f"{name}.log_sigma"] = fam.log_sigma
        return params

    def set_parameters(self, params):
        for name, fam in self.families.items():
            fam.mu = np.asarray(params[f"{name}.mu"], dtype=np.float64)
            fam.log_sigma = np.asarray(params[f"{name}.log_sigma"], dtype=np.float64)

    def posterior_means(self):
        return {name: fam.posterior_mean() for name, fam in self.families.items()}


def reparameterize(family, z):
    """Deterministic transform of standard noise into a family sample."""
    return family.sample(z)


def entropy_and_prior(state, samples):
    """(log prior, log q) of the state's factors at the given samples."""
    log_prior = sum(
        state.priors[name].log_prob(samples[name]) for name in state.names
    )
    log_q = sum(
        state.families[name].log_density(samples[name]) for name in state.names
    )
    return log_prior, log_q


def elbo_estimate(state, batch, model, num_items, noise):
    """Single-draw objective estimate for one minibatch of items.

    The likelihood over the batch is rescaled by num_items / len(batch);
    prior and entropy terms cover every factor in full.
    """
    batch = np.atleast_1d(np.asarray(batch))
    if batch.size == 0:
        raise ValueError("batch must be non-empty")
    if num_items < batch.size:
        raise ValueError("num_items must be at least the batch size")
    samples = state.reparameterize(noise)
    log_prior, log_q = entropy_and_prior(state, samples)
    loglik, _ = model.loglik(samples, batch, want_grads=False)
    scale = num_items / batch.size
    return log_prior + scale * loglik - log_q


def gradient(state, batch, model, num_items, noise):
    """Exact gradient of `elbo_estimate` with the noise draw held fixed.

    Returns {'<name>.mu': g, '<name>.log_sigma': g} plus the estimate itself
    under the key '__elbo__' (computed from the same pass).
    """
    batch = np.atleast_1d(np.asarray(batch))
    if batch.size == 0:
        raise ValueError("batch must be non-empty")
    samples = state.reparameterize(noise)
    log_prior, log_q = entropy_and_prior(state, samples)
    loglik, lik_grads = model.loglik(samples, batch, want_grads=True)
    scale = num_items / batch.size

    grads = {"__elbo__": log_prior + scale * loglik - log_q}
    for name in state.names:
        fam = state.families[name]
        s = samples[name]
        z = noise[name]
        ds = state.priors[name].dlog_prob(s)
        g = lik_grads.get(name)
        if g is not None:
            ds = ds + scale * g
        dmu_s, dls_s = fam.sample_partials(z, s)
        q_mu, q_ls = fam.log_density_grads(z)
        grads[f"{name}.mu"] = ds * dmu_s - q_mu
        grads[f"{name}.log_sigma"] = ds * dls_s - q_ls
    return grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class AdamState:
    """First/second moment accumulators for Adam with bias correction."""

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}


def adam_step(adam, params, grads):
    """One bias-corrected Adam ascent step; returns the updated params.

    Moment accumulators live in `adam` and are keyed like `params`.
    """
    adam.t += 1
    t = adam.t
    out = {}
    for key, p in params.items():
        g = grads[key]
        m = adam.m.get(key)
        if m is None:
            m = np.zeros_like(p)
            adam.v[key] = np.zeros_like(p)
        v = adam.v[key]
        m = adam.beta1 * m + (1.0 - adam.beta1) * g
        v = adam.beta2 * v + (1.0 - adam.beta2) * g * g
        adam.m[key] = m
        adam.v[key] = v
        m_hat = m / (1.0 - adam.beta1**t)
        v_hat = v / (1.0 - adam.beta2**t)
        out[key] = p + adam.lr * m_hat / (np.sqrt(v_hat) + adam.eps)
    return out


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def finite_difference(fn, params, step=1e-5):
    """Central finite differences of a scalar function of named arrays.

    `fn` takes a {key: array} dict and returns a float. Used as the
    independent contract check for `gradient`.
    """
    grads = {}
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    for key, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn(work)
            flat[i] = orig - step
            lo = fn(work)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads[key] = g
    return grads


# ---------------------------------------------------------------------------
# Optimization loop
# ---------------------------------------------------------------------------


def fit(
    state,
    model,
    *,
    max_steps,
    batch_size,
    rng,
    adam=None,
    mc_samples=1,
    elbo_report_interval=100,
    callback=None,
):
    """Run Adam ascent on the reparameterized objective; returns the trace.

    Items are subsampled uniformly without replacement per step; when
    batch_size >= model.num_items every step uses the full batch in index
    order, so runs are bitwise reproducible for a fixed seed. The trace
    holds (step, estimate) pairs every `elbo_report_interval` steps.
    """
    if adam is None:
        adam = AdamState()
    num_items = model.num_items
    full_batch = batch_size >= num_items
    fixed = np.arange(num_items)
    trace = []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for step in range(1, max_steps + 1):
            batch = fixed if full_batch else rng.choice(num_items, batch_size, replace=False)
            total = None
            for _ in range(mc_samples):
                noise = state.sample_noise(rng)
                try:
                    grads = gradient(state, batch, model, num_items, noise)
                except ValueError as exc:
                    # Samples drawn inside the loop can only violate a prior's
                    # support by numeric under- or overflow.
                    raise NonFiniteElbo(step, math.nan) from exc
                if total is None:
                    total = grads
                else:
                    for key, g in grads.items():
                        total[key] = total[key] + g
            if mc_samples > 1:
                for key in total:
                    total[key] = total[key] / mc_samples
            value = float(total.pop("__elbo__"))
            if not math.isfinite(value):
                raise NonFiniteElbo(step, value)
            params = adam_step(adam, state.parameters(), total)
            state.set_parameters(params)
            if step == 1 or step % elbo_report_interval == 0 or step == max_steps:
                trace.append((step, value))
                if callback is not None:
                    callback(step, value)
    return trace
