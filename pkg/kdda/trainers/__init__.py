from kdda.trainers.models import (
    BASELINE_ORDERINGS,
    KD_THEN_UDA,
    SOURCE_ONLY,
    UDA_METHODS,
    UDA_MMD,
    UDA_ONLY,
    UDA_REVGRAD,
    UDA_THEN_KD,
    BaselineResult,
    MetricRecord,
    MtdaResult,
    NonFiniteLossError,
    RunResult,
    SgdConfig,
    StdaResult,
    TrainConfig,
    TrainingConfigError,
    final_accuracies,
)
from kdda.trainers.optimizer import SGD, sgd_step
from kdda.trainers.evaluation import evaluate, evaluate_models
from kdda.trainers.learners import StudentLearner, UdaLearner
from kdda.trainers.joint import (
    STUDENT_NAME,
    mean_target_accuracy,
    run_joint,
    split_domains,
    train_mixed_target,
    train_mtda,
    train_per_target,
    train_stda,
)
from kdda.trainers.baselines import train_baseline
from kdda.trainers.reporting import (
    METRIC_COLUMNS,
    metric_rows,
    summarize,
    write_metric_rows,
    write_metrics_csv,
    write_summary,
)
