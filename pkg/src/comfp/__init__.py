"""Composite-network link prediction with ComFP and MMSB baselines."""
from .evaluation import average_precision, long_tail_map, map_score, partition_agreement, run_experiment
from .mmsb import MmsbConfig, fit_mmsb
from .model import ComfpConfig, fit
from .network import CompositeNetwork, LayerGraph, assemble_composite, holdout_split, load_manifest, sample_negatives
from .synth import generate_comfp, generate_mmsb, plant_sparse_dense_pair

__version__ = "0.1.0"
