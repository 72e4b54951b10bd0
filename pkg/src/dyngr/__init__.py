"""Generative retrieval over dynamic corpora."""

from .config import ExperimentConfig
from .corpus import (Chunk, Document, DocumentStore, DynamicPlan, Query,
                     QueryStore, RelevancePair, Vocabulary, chunk_document,
                     ingest, partition_dynamic, tokenize)
from .decode import (BeamHypothesis, FMConstraint, FMIndex, TrieConstraint,
                     build_fm_index, constrained_beam_search,
                     fm_allowed_extensions, fm_locate)
from .docid_index import DocidRegistry, PrefixTree, allowed_next, lookup, register
from .embed import Embedder
from .evalharness import run_experiment
from .mdgr import (MDGRIndex, RankedDoc, mdgr_build_initial, mdgr_index_new,
                   mdgr_retrieve)
from .quantize import (HierarchicalTree, KMeansModel, PQCodebook,
                       hierarchical_docids, kmeans_fit, pq_encode, pq_fit,
                       pq_reconstruct)
from .scorer import (ReferenceScorer, TrainingPair, UniformScorer,
                     build_training_pairs, sequence_logprob,
                     train_reference_scorer)
from .synthetic import generate_benchmark, write_benchmark

__version__ = "0.1.0"
