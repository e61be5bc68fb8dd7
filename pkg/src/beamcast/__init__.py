"""Vision-feature-driven mmWave beam prediction at desk scale.

Synthetic V2I scenario generation, a minimal autodiff core, a frozen
transformer backbone with cross-attention patch reprogramming and
prompt-as-prefix conditioning, recurrent baselines, training, and top-K
evaluation.
"""

from .backbone import Backbone, BackboneConfig, PromptText, tokenize
from .baselines import RecurrentConfig, RecurrentModel, count_params, forward_recurrent
from .channel import (
    BeamCodebook,
    ChannelSnapshot,
    RxConfig,
    beamforming_gain,
    dft_codebook,
    los_channel,
    optimal_beam,
    simulate_rx,
    steering_vector,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (
    BeamcastError,
    CheckpointError,
    ConfigError,
    ParseError,
    ShapeError,
    ValidationError,
)
from .evaluate import TopKReport, complexity_report, evaluate, top_k_accuracy
from .optim import Adam, LrSchedule, lr_at
from .reprogram import (
    BeamLLM,
    BeamLLMConfig,
    BeamPrediction,
    PatchConfig,
    build_prompt,
    patchify,
    predict_beams,
    revin_invert,
    revin_normalize,
)
from .scenario import (
    BoundingBox,
    DatasetSplit,
    FrameMeta,
    ScenarioConfig,
    SequenceRecord,
    WindowSample,
    generate_scenario,
    load_jsonl,
    normalize_bbox,
    save_jsonl,
    sliding_windows,
    split_dataset,
)
from .tensor import Parameter, Tensor, no_grad
from .training import TrainConfig, TrainResult, loss_batch, train

__version__ = "0.1.0"
