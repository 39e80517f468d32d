"""vidadapt: self-supervised adaptation of small vision transformers from
object-centric videos, implemented in NumPy with analytic gradients."""

from .augment import AugmentConfig, AugmentedBatch, augment_batch, global_view_1, global_view_2, local_crop_pair, motion_sim
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_from_dict, load_config, save_resolved
from .data import DatasetSplit, SynthSpec, VideoClip, generate_dataset, generate_video, load_dataset, save_dataset, split_dataset
from .distill import LossConfig, TeacherState, center_update, dino_ce, ema_update, entropy, teacher_probs, uwsd_loss, uwsd_weight
from .errors import VidAdaptError
from .evaluate import EmbeddingIndex, build_index, extract, forgetting_probe, knn_accuracy, knn_predict, retrieval_grid
from .experiments import reproduce_experiment, sweep_delta
from .model import FreezeSchedule, LoraAdapter, ViTConfig, backward, forward, init_params, inject_lora, merge_adapters, trainable_mask
from .sampler import FramePair, RawBatch, SamplerConfig, build_epoch, sample_pair, sample_pair_ranged
from .trainer import TrainConfig, TrainState, pretrain_source, run_pipeline, train_step

__version__ = "0.1.0"
