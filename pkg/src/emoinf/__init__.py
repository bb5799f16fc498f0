"""Emotion influence modeling for image-sharing social networks."""

__version__ = "0.1.0"

from .network import (  # noqa: F401
    CATEGORIES,
    EmotionCategory,
    ImageRecord,
    NetworkFormatError,
    TimeVaryingNetwork,
    UserSliceLabel,
    derive_user_labels,
    load_network,
    mask_image_labels,
    resolve_multilabel,
    save_network,
)
from .factorgraph import (  # noqa: F401
    Factor,
    FactorGraph,
    FactorKind,
    ImageVar,
    InfluenceVar,
    ParameterSet,
    UserVar,
    build_graph,
    objective,
)
from .inference import (  # noqa: F401
    BpConfig,
    MarginalTable,
    brute_force_map,
    brute_force_marginals,
    max_product,
    predict_probability,
    sum_product,
)
