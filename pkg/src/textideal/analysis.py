"""Post-fit analysis: alignment, correlation metrics, topic reports and the
likelihood-ratio influence diagnostic."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .tbip import log_likelihood_doc, tbip_rate


class ZeroVariance(Exception):
    """A correlation or standardization input has no variance."""


@dataclass
class AlignedIdealPoints:
    """Standardized ideal points, sign-matched to a reference when given."""

    values: np.ndarray
    reference_name: str | None = None
    sign_flipped: bool = False


def align(points, reference=None, reference_name=None):
    """Standardize to mean 0, sd 1; negate if anti-correlated with `reference`."""
    points = np.asarray(points, dtype=np.float64)
    if points.size < 2:
        raise ValueError("need at least two points to standardize")
    sd = points.std()
    if sd == 0:
        raise ZeroVariance("ideal points are constant")
    values = (points - points.mean()) / sd
    flipped = False
    if reference is not None:
        reference = np.asarray(reference, dtype=np.float64)
        if reference.shape != points.shape:
            raise ValueError("reference must match the points in length")
        r, _ = compare(values, reference)
        if r < 0:
            values = -values
            flipped = True
    return AlignedIdealPoints(values, reference_name, flipped)


def _pearson(a, b):
    u = a - a.mean()
    v = b - b.mean()
    su, sv = np.sum(u * u), np.sum(v * v)
    if su == 0 or sv == 0:
        raise ZeroVariance("correlation input is constant")
    return float(np.sum(u * v) / np.sqrt(su * sv))


def compare(a, b):
    """(Pearson, Spearman) correlation between two score vectors.

    Spearman is the Pearson correlation of average-tied ranks.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1-D vectors of equal length")
    if a.size < 3:
        raise ValueError("need at least three points")
    return _pearson(a, b), _pearson(rankdata(a), rankdata(b))


@dataclass
class TopicReport:
    """Per-topic top terms at ideal points -1 (negative pole), 0 and +1."""

    num_terms: int
    topics: list  # dicts with keys "negative", "neutral", "positive"

    def to_json(self):
        return json.dumps({"num_terms": self.num_terms, "topics": self.topics}, indent=2)

    def to_markdown(self):
        lines = ["| Topic | Pole | Top terms |", "| --- | --- | --- |"]
        for k, topic in enumerate(self.topics):
            for pole in ("negative", "neutral", "positive"):
                lines.append(f"| {k} | {pole} | {', '.join(topic[pole])} |")
        return "\n".join(lines) + "\n"


def _top_terms(intensity, vocab, m):
    # Stable sort keeps ties in term-index order.
    order = np.argsort(-intensity, kind="stable")[:m]
    return [vocab[int(v)] for v in order]


def topic_report(fit, vocab, m, exact_expectation=False):
    """Rank terms per topic at the neutral point and both poles.

    Pole intensities default to the plug-in form beta_hat * exp(-+eta_hat).
    With `exact_expectation` the lognormal-Gaussian expectation is used
    instead, which additionally needs the fitted eta scales.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    beta = fit.beta_hat
    eta = fit.eta_hat
    if exact_expectation:
        if fit.eta_sigma is None:
            raise ValueError("fit carries no eta scales; cannot take exact expectation")
        half_var = 0.5 * fit.eta_sigma**2
        neg = beta * np.exp(-eta + half_var)
        pos = beta * np.exp(eta + half_var)
    else:
        neg = beta * np.exp(-eta)
        pos = beta * np.exp(eta)
    topics = []
    for k in range(beta.shape[0]):
        topics.append(
            {
                "negative": _top_terms(neg[k], vocab, m),
                "neutral": _top_terms(beta[k], vocab, m),
                "positive": _top_terms(pos[k], vocab, m),
            }
        )
    return TopicReport(m, topics)


@dataclass
class InfluenceScore:
    """Log-likelihood ratios of a document against fixed ideal points."""

    doc_id: str
    ratio_vs_zero: float
    ratio_vs_max: float
    ratio_vs_min: float


def influence(fit, corpus, doc, weights=None):
    """Score how a document pulled its author's fitted position.

    Positive ratio_vs_zero marks the document as evidence for a more
    extreme position; positive ratio_vs_max / ratio_vs_min mark evidence
    against the corresponding extreme.
    """
    from .corpus import compute_weights

    if not 0 <= doc < corpus.num_docs:
        raise ValueError(f"doc index {doc} out of range")
    if weights is None:
        weights = compute_weights(corpus)
    author = corpus.author_of[doc]
    w = weights[author]
    y = corpus.dense_rows([doc])[0]
    theta_d = fit.theta_hat[doc]

    def loglik_at(x_value):
        rate = tbip_rate(theta_d, fit.beta_hat, fit.eta_hat, x_value, w)
        return log_likelihood_doc(y, rate)

    base = loglik_at(fit.x_hat[author])
    return InfluenceScore(
        doc_id=corpus.doc_ids[doc],
        ratio_vs_zero=base - loglik_at(0.0),
        ratio_vs_max=base - loglik_at(float(fit.x_hat.max())),
        ratio_vs_min=base - loglik_at(float(fit.x_hat.min())),
    )


def expected_count_ratio(fit, topic, term, x_lo, x_hi):
    """Factor by which a term's expected count grows moving x_lo -> x_hi."""
    eta = fit.eta_hat[topic, term]
    return float(np.exp((x_hi - x_lo) * eta))


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------


def save_ideal_points_csv(path, names, values):
    """(name, score) rows, the plotting format for ideal point figures."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "score"])
        for name, value in zip(names, values):
            writer.writerow([name, repr(float(value))])


def load_ideal_points_csv(path):
    """Read (name, score) rows; returns (names, scores)."""
    names, scores = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "name":
                continue
            names.append(row[0])
            scores.append(float(row[1]))
    if not names:
        raise ValueError(f"{path} lists no scores")
    return names, np.asarray(scores)


def match_by_name(fit_names, fit_values, ref_names, ref_values):
    """Inner-join two (name, score) lists in fit order.

    Raises ValueError when no names overlap.
    """
    ref = dict(zip(ref_names, ref_values))
    pairs = [(v, ref[n]) for n, v in zip(fit_names, fit_values) if n in ref]
    if not pairs:
        raise ValueError("no overlapping names between fit and reference")
    a, b = zip(*pairs)
    return np.asarray(a), np.asarray(b)
