from kdda.losses.models import (
    KL_DIRECTIONS,
    KL_STUDENT_TEACHER,
    KL_TEACHER_STUDENT,
    MARGIN_COUNT,
    MARGIN_EMA,
    KernelConfig,
    LossInputError,
    LossWeights,
    MarginState,
    ObjectiveParts,
)
from kdda.losses.uda import (
    SOURCE_DOMAIN_LABEL,
    TARGET_DOMAIN_LABEL,
    cross_entropy,
    domain_confusion,
    median_bandwidths,
    mmd_gaussian,
    teacher_uda_mmd,
    teacher_uda_revgrad,
)
from kdda.losses.distill import (
    DISTILL_MODES,
    MODE_FEATURE,
    MODE_LOGITS,
    FeatureDistiller,
    FeaturePair,
    feature_distill,
    logits_distill,
    margin_relu,
    partial_l2,
    source_kd,
    target_kd,
    total_mtda_loss,
    total_stda_loss,
    update_margins,
)
