"""Bayesian vote ideal points from roll-call data.

Votes follow a one-dimensional logistic factor model: lawmaker i votes yea
on bill j with probability sigmoid(alpha_j + x_i * eta_j), all three
latents standard normal a priori. Trained with the same reparameterized
machinery as the text model, with Gaussian factors throughout.
"""

from __future__ import annotations

import csv
from collections import namedtuple

import numpy as np

from . import engine
from .engine import AdamState, GaussianFamily, NormalPrior, VariationalState


def sigmoid(t):
    """Logistic function, stable across the finite float range."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def vote_prob(alpha_j, eta_j, x_i):
    """Probability of a yea vote."""
    return sigmoid(alpha_j + x_i * eta_j)


class VoteMatrix:
    """Sparse ternary vote records; only yea(1)/nay(0) entries are stored."""

    def __init__(self, lawmaker_idx, bill_idx, votes, lawmaker_names, bill_ids):
        self.lawmaker_idx = np.asarray(lawmaker_idx, dtype=np.int64)
        self.bill_idx = np.asarray(bill_idx, dtype=np.int64)
        self.votes = np.asarray(votes, dtype=np.int64)
        self.lawmaker_names = list(lawmaker_names)
        self.bill_ids = list(bill_ids)
        n = self.votes.shape[0]
        if self.lawmaker_idx.shape[0] != n or self.bill_idx.shape[0] != n:
            raise ValueError("index arrays and votes must have equal length")
        if not np.all((self.votes == 0) | (self.votes == 1)):
            raise ValueError("votes must be 0 or 1")
        if n:
            if self.lawmaker_idx.min() < 0 or self.lawmaker_idx.max() >= len(self.lawmaker_names):
                raise ValueError("lawmaker index out of range")
            if self.bill_idx.min() < 0 or self.bill_idx.max() >= len(self.bill_ids):
                raise ValueError("bill index out of range")
        pairs = self.lawmaker_idx * len(self.bill_ids) + self.bill_idx
        if np.unique(pairs).size != n:
            raise ValueError("duplicate (lawmaker, bill) pair")

    @property
    def num_lawmakers(self):
        return len(self.lawmaker_names)

    @property
    def num_bills(self):
        return len(self.bill_ids)


class VoteModel:
    """Bernoulli likelihood over vote entries; items are bills."""

    def __init__(self, votes):
        self.votes = votes
        self.num_items = votes.num_bills
        order = np.argsort(votes.bill_idx, kind="stable")
        self._i = votes.lawmaker_idx[order]
        self._j = votes.bill_idx[order]
        self._v = votes.votes[order].astype(np.float64)
        counts = np.bincount(self._j, minlength=votes.num_bills)
        self._indptr = np.concatenate([[0], np.cumsum(counts)])

    def _entry_indices(self, bill_idx):
        if bill_idx.size == self.num_items:
            return slice(None)
        return np.concatenate(
            [np.arange(self._indptr[b], self._indptr[b + 1]) for b in bill_idx]
        )

    def loglik(self, samples, bill_idx, want_grads=False):
        x = samples["x"]
        alpha = samples["alpha"]
        eta = samples["eta"]
        sel = self._entry_indices(np.asarray(bill_idx))
        i, j, v = self._i[sel], self._j[sel], self._v[sel]
        t = alpha[j] + x[i] * eta[j]
        value = float(-np.sum(np.logaddexp(0.0, -t * (2.0 * v - 1.0))))
        grads = None
        if want_grads:
            g = v - sigmoid(t)
            grads = {
                "alpha": np.bincount(j, weights=g, minlength=alpha.shape[0]),
                "eta": np.bincount(j, weights=g * x[i], minlength=eta.shape[0]),
                "x": np.bincount(i, weights=g * eta[j], minlength=x.shape[0]),
            }
        return value, grads


VoteFit = namedtuple("VoteFit", ["x_hat", "alpha_hat", "eta_hat", "elbo_trace"])


def make_state(num_lawmakers, num_bills, rng, sigma_init=0.1, loc_scale=0.1):
    def fam(n):
        return GaussianFamily(
            loc_scale * rng.standard_normal(n), np.full(n, np.log(sigma_init))
        )

    families = {"x": fam(num_lawmakers), "alpha": fam(num_bills), "eta": fam(num_bills)}
    priors = {name: NormalPrior(1.0) for name in families}
    return VariationalState(families, priors)


def train_vote(votes, cfg):
    """Fit vote ideal points; returns (x_hat, alpha_hat, eta_hat, trace).

    Full-batch by default; setting cfg.batch_size below the bill count
    subsamples bills with the standard likelihood rescaling.
    """
    if np.bincount(votes.lawmaker_idx, minlength=votes.num_lawmakers).min() < 1:
        raise ValueError("every lawmaker needs at least one recorded vote")
    if np.bincount(votes.bill_idx, minlength=votes.num_bills).min() < 1:
        raise ValueError("every bill needs at least one recorded vote")
    rng = np.random.default_rng(cfg.seed)
    state = make_state(votes.num_lawmakers, votes.num_bills, rng)
    model = VoteModel(votes)
    batch = min(cfg.batch_size, votes.num_bills) if cfg.batch_size else votes.num_bills
    trace = engine.fit(
        state,
        model,
        max_steps=cfg.max_steps,
        batch_size=batch,
        rng=rng,
        adam=AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps),
        mc_samples=cfg.mc_samples,
        elbo_report_interval=cfg.elbo_report_interval,
    )
    means = state.posterior_means()
    return VoteFit(means["x"], means["alpha"], means["eta"], trace)


def save_votes_csv(votes, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lawmaker_name", "bill_id", "vote"])
        for i, j, v in zip(votes.lawmaker_idx, votes.bill_idx, votes.votes):
            writer.writerow([votes.lawmaker_names[i], votes.bill_ids[j], int(v)])


def load_votes_csv(path):
    """Read a votes CSV, silently excluding rows that are not 0/1 votes."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "lawmaker_name":
                continue
            if len(row) < 3 or row[2] not in ("0", "1"):
                continue
            records.append((row[0], row[1], int(row[2])))
    if not records:
        raise ValueError(f"{path} contains no yea/nay votes")
    lawmaker_names = sorted({r[0] for r in records})
    bill_ids = sorted({r[1] for r in records})
    li = {n: i for i, n in enumerate(lawmaker_names)}
    bi = {n: j for j, n in enumerate(bill_ids)}
    return VoteMatrix(
        [li[r[0]] for r in records],
        [bi[r[1]] for r in records],
        [r[2] for r in records],
        lawmaker_names,
        bill_ids,
    )
