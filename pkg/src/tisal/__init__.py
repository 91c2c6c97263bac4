"""Text-guided image saliency toolkit: dataset pipeline, fixation-density
ground truth, the seven-metric evaluation suite, and the text-fusion
saliency network with its training protocols."""

from . import attributes, data_model, fixproc, fixtures, gradcheck, metrics, protocols, training
from .data_model import (
    ConditionType,
    DatasetManifest,
    FixationRecord,
    TextImagePair,
    load_fixations,
    load_manifest,
    save_manifest,
    split_dataset,
)
from .fixproc import (
    DensityMap,
    FixationMap,
    Normalization,
    SaliencyMap,
    aggregate,
    degrees_to_sigma,
    density_map,
    salf_read,
    salf_write,
)
from .fixtures import FixtureSpec, generate_fixtures
from .metrics import (
    EvalConfig,
    MetricReport,
    auc_judd,
    cc,
    center_prior,
    evaluate_all,
    info_gain,
    kl_div,
    nss,
    shuffled_auc,
    sim,
)
from .model import ModelConfig, TGSalNet, desk_config, load_checkpoint, save_checkpoint
from .training import LossConfig, Protocol, TrainConfig, loss, lr_at, train

__version__ = "0.1.0"
