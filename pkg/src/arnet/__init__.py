"""Coarse-to-fine human motion prediction with adversarial error augmentation."""
from .autodiff import Tape, Value, backward, grad_check
from .dct import build_basis, decode, encode
from .evaluation import evaluate, mae_at_frame, zero_velocity_report
from .motion import (Dataset, MotionSequence, SampleWindow, parse_motion_file,
                     serialize_motion_file, synth_dataset, zero_velocity_predict)
from .refinement import CascadeModel, build_cascade, cascade_forward
from .training import TrainConfig, load_checkpoint, save_checkpoint, train_loop

__version__ = "0.1.0"
