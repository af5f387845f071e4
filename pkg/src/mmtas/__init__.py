"""Multimodal feature extraction and pretraining for robotic temporal
action segmentation, with a synthetic-data pipeline for end-to-end testing."""

from .data import (ActionAnnotation, LabelSet, NormalizationStats, Recording,
                   SensorStream, ValidationError, framewise_labels,
                   load_recording, write_recording)
from .metrics import (MetricsReport, Segment, boundaries_from_segments,
                      detection_rate, edit_score, evaluate, evaluate_split,
                      frame_accuracy, segmental_f1, segments_from_framewise)
from .model import FeatureExtractor, ModelConfig, SensorSpec
from .preprocessing import (AlignedFrame, CoverageError, PreprocessConfig,
                            audio_logmel, compute_normalization_stats,
                            frame_windows, normalize_proprio, preprocess_recording,
                            resample_window)
from .pretraining import (PretrainConfig, PretrainModel, loss_action,
                          loss_boundary, loss_total, pretrain, window_embedding)
from .sampler import (SamplerConfig, WindowSample, allocate_counts,
                      order_sentence, sample_window, window_bounds)
from .synth import SynthConfig, generate_synthetic_dataset
from .tcn import HeadConfig, MultiStageTCN, predict, train_head

__version__ = "0.1.0"
