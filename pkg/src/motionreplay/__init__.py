"""Class-incremental training of a conditional motion VAE with generative replay."""

__version__ = "0.1.0"

from .body import NUM_JOINTS, Skeleton, VertexSet, body_vertices, fk_positions
from .data import (FRAME_DIM, Dataset, MotionSequence, PoseFrame, TaskSchedule,
                   frame_to_vector, load_dataset, save_dataset, split_tasks,
                   vector_to_frame)
from .errors import (DegenerateRotationError, FrozenModelError, MetricError,
                     NonFiniteGradientError, TrainingDivergedError, ValidationError)
from .losses import (LossBreakdown, aux_loss, latent_loss, reconstruction_loss,
                     total_loss, vertex_loss)
from .metrics import (EvalProtocol, EvalReport, accuracy, diversity, evaluate,
                      extract_features, fid, multimodality)
from .model import (GmmBank, ModelConfig, SeqVae, gru_cell_step, load_checkpoint,
                    save_checkpoint)
from .replay import (MixedTrainingSet, ReplayConfig, build_replay_set, mix,
                     replay_counts)
from .rotations import rotmat_to_sixd, sixd_to_rotmat, sixd_to_rotmats_torch
from .synth import SynthSpec, default_skeleton, synth_generate
from .training import (AdamW, Classifier, ClassifierConfig, OptimizerConfig, RunLog,
                       TrainConfig, optimizer_step, pretrain_classifier, run_cl2gen,
                       train_task)

__all__ = [name for name in dir() if not name.startswith("_")]
