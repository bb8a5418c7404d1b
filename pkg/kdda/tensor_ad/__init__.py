from kdda.tensor_ad.tensor import (
    DiffTensor,
    NonFiniteError,
    ShapeMismatchError,
    Tape,
    TapeError,
    backward,
    checked_mode,
    current_tape,
    no_grad,
)
from kdda.tensor_ad.ops import (
    LITERAL_MULTIPLY,
    STANDARD_DIVIDE,
    add,
    concat,
    detach,
    exp,
    expand,
    grad_reverse,
    log,
    log_softmax,
    log_softmax_temperature,
    matmul,
    maximum,
    multiply,
    pairwise_sq_dists,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scalar_multiply,
    softmax,
    softmax_temperature,
    squared_l2_norm,
    subtract,
    transpose,
)
