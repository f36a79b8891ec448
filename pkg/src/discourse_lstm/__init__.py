"""Tree-LSTM and Discourse-LSTM sentiment models over RST discourse trees.

The package is numpy-only: a small reverse-mode autodiff tape
(:mod:`.tensor`), the tree data model (:mod:`.tree`), leaf featurization,
the four recursive cell variants, tree augmentation, training, evaluation
and tensor-weight inspection.
"""

from .augment import AugmentConfig, corrupt_relations, insert_leaf, reorder_node
from .evaluation import Metrics, evaluate, sensitivity_sweep, sum_baseline
from .features import EmbeddingTable, Lexicon, Pipeline, featurize_tree
from .model import VARIANTS, ModelParams, forward_tree, init_params, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainReport, train
from .tree import DiscourseNode, DiscourseTree, Hierarchy, RelationType, parse_tree, read_trees, write_trees

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "DiscourseNode", "DiscourseTree", "EmbeddingTable", "Hierarchy", "Lexicon", "Metrics",
    "ModelParams", "Pipeline", "RelationType", "TrainConfig", "TrainReport", "VARIANTS", "corrupt_relations",
    "evaluate", "featurize_tree", "forward_tree", "init_params", "insert_leaf", "load_checkpoint", "parse_tree",
    "read_trees", "reorder_node", "save_checkpoint", "sensitivity_sweep", "sum_baseline", "train", "write_trees",
]
