from kdda.nets.models import (
    DenseLayer,
    DomainClassifierSpec,
    LayerParams,
    NetworkSpec,
    NetworkState,
    RegressorState,
    SpecError,
)
from kdda.nets.network import (
    Network,
    apply_regressor,
    build_mlp_spec,
    forward,
    init_network,
    init_regressor,
)
from kdda.nets.checkpoint import CheckpointError, load_state, save_state
