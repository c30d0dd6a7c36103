"""Ideal point estimation from political texts and roll-call votes.

The package estimates author positions on a latent left-right axis three
ways: from text via a tilted Poisson-factorization topic model, from votes
via a logistic factor model, and from text via the wordfish / wordshoal
scaling baselines. All models share one reparameterized variational
inference engine.
"""

from .analysis import align, compare, expected_count_ratio, influence, topic_report
from .baselines import DebateLabeledCorpus, train_wordfish, train_wordshoal
from .corpus import (
    AllDocumentsFiltered,
    PreprocessConfig,
    RawDocument,
    SparseCorpus,
    Vocabulary,
    build_corpus,
    compute_weights,
    log_transform,
    tokenize,
)
from .engine import NonFiniteElbo
from .pf import pretrain
from .synth import SynthSpec, sample_tbip, sample_votes
from .tbip import (
    FitResult,
    PriorConfig,
    TrainConfig,
    log_likelihood_doc,
    tbip_rate,
    train_tbip,
)
from .vote import VoteMatrix, train_vote, vote_prob

__version__ = "0.1.0"

__all__ = [
    "AllDocumentsFiltered",
    "DebateLabeledCorpus",
    "FitResult",
    "NonFiniteElbo",
    "PreprocessConfig",
    "PriorConfig",
    "RawDocument",
    "SparseCorpus",
    "SynthSpec",
    "TrainConfig",
    "Vocabulary",
    "VoteMatrix",
    "align",
    "build_corpus",
    "compare",
    "compute_weights",
    "expected_count_ratio",
    "influence",
    "log_likelihood_doc",
    "log_transform",
    "pretrain",
    "sample_tbip",
    "sample_votes",
    "tbip_rate",
    "tokenize",
    "topic_report",
    "train_tbip",
    "train_vote",
    "train_wordfish",
    "train_wordshoal",
    "vote_prob",
]
