"""Hybrid spiking-convolutional image inpainting on a self-contained numpy core."""

from .data import (
    DatasetManifest,
    MaskSpec,
    Sample,
    generate_mask,
    load_image,
    make_sample,
    read_manifest,
    save_image,
    split_dataset,
    synth_corpus,
    synth_image,
    write_manifest,
)
from .errors import (
    CheckpointError,
    CheckpointVersionError,
    ConfigurationError,
    ImageFormatError,
    NumericError,
    ShapeMismatchError,
    UnsupportedImageError,
)
from .estimator import SpikingConvInpainter, check_image_batch
from .lif import LifParams, LifState, lif_decay, lif_step, simulate_neuron
from .network import (
    Model,
    ModelInput,
    NetConfig,
    backward,
    build,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .seeding import derive_seed, rng_for
from .spiking import SnnConvLayer, snn_backward, snn_forward, spike_fn
from .tensor_ops import (
    AdamState,
    ConvLayerParams,
    adam_step,
    as_tensor4,
    conv2d_backward,
    conv2d_forward,
    mse_loss,
    relu,
    relu_backward,
)
from .training import (
    EpochMetrics,
    TrainConfig,
    evaluate,
    evaluate_arrays,
    inpaint,
    read_metrics,
    train,
    train_on_arrays,
    write_metrics,
)

__version__ = "0.1.0"
