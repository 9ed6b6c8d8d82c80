"""Selective query processing for ad hoc retrieval.

Build an index, run a grid of processing threads (weighting model x query
expansion x feedback depth), pick two complementary threads from training
effectiveness and learn a per-query router between them.
"""

__version__ = "0.1.0"

from .corpus import InvertedIndex, Qrels, Topic, build_index, parse_qrels, parse_topics, tokenize
from .errors import SQPError
from .gridpoints import GridOfPoints, ProcessingThread, build_grid, enumerate_threads, run_query
from .retrieval import ScoredList, WeightedQuery, WeightingModel, score
from .selector import CandidatePair, RoutingModel, combsum, route, select_pair, train_router

__all__ = [
    "InvertedIndex", "Qrels", "Topic", "build_index", "parse_qrels", "parse_topics", "tokenize",
    "SQPError", "GridOfPoints", "ProcessingThread", "build_grid", "enumerate_threads", "run_query",
    "ScoredList", "WeightedQuery", "WeightingModel", "score", "CandidatePair", "RoutingModel",
    "combsum", "route", "select_pair", "train_router",
]
