"""From-scratch transformer-encoder toolkit for sector classification of ad texts."""

from .checkpoint import Checkpoint
from .corpus import DatasetSplit, LabeledExample, LabelMap, RawRecord, dedup, load_corpus, normalize, stratified_split
from .encoder import ModelConfig, ModelParams, classify, forward_encode, mlm_forward
from .metrics import ClassReport, ConfusionMatrix, accuracy, confusion, precision_recall_f1, render_report, weighted_average
from .tokenizer import Encoding, Vocabulary, build_vocab, decode, encode
from .train import Adam, TrainConfig, TrainTrace, finetune, mask_tokens, pretrain_mlm

__version__ = "0.1.0"
