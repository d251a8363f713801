"""Universal domain adaptation for time series: joint decision space, auto-thresholded
pseudo-labels and unbalanced optimal transport toward unknown-class anchors."""

from .alignment import alignment_loss, assemble_block_cost, common_cost, training_step, unknown_cost
from .anchors import AnchorSet, decision_anchor, init_anchors, update_anchors
from .config import ConfigError, ExperimentConfig, TrainConfig
from .data import Scenario, SynthConfig, TimeSeriesDataset, build_unida_scenario, load_dataset, save_dataset, synth_generate
from .evaluation import EvalReport, evaluate, h_score, inference_threshold
from .model import ArchConfig, Network
from .ot import OTConfig, TransportPlan, exact_ot_small, sinkhorn, sinkhorn_unbalanced
from .pipeline import TrainedModel, train
from .pseudo_label import ClassMemory, joint_decision, pseudo_label_batch
from .thresholding import auto_threshold

__version__ = "0.1.0"
