"""Frequency-domain dataset analysis and backdoor poisoning toolkit."""

from .analysis import (
    AggregationComparison,
    EffectivenessMap,
    RegionSelection,
    compare_aggregations,
    effectiveness,
    effectiveness_of_coefficients,
    select_key_regions,
)
from .data import LabeledDataset, load_cifar_binary, load_image_dir, load_poisoned
from .errors import FreqPoisonError
from .metrics import (
    DensityCurve,
    DetectionCounts,
    PredictionSet,
    asr,
    clean_accuracy,
    detection_scores,
    l2_kde,
    mse,
    ssim,
)
from .poison import (
    PoisonConfig,
    PoisonManifest,
    PoisonMask,
    build_mask,
    poison_dataset,
    poison_test,
    poison_test_dataset,
    poison_train,
)
from .trigger import FrequencyTrigger, average_transform, make_frequency_trigger
from .wavelets import (
    Spectrogram,
    WaveletSpec,
    iwpd,
    pad_image,
    region_paths,
    region_view,
    wavelet_spec,
    wpd,
)

__version__ = "0.1.0"
