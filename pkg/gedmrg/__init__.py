# Explicitly import submodules to enable tab completion
__version__ = "0.1.0"
from . import tensor
from . import mps
from . import mpo
from . import serializer
from . import krylov
from . import dmrg
from . import divergence
from . import oracle

# Shortcut imports for commonly used classes
from .tensor.tensor import Tensor
from .mps.mps import MatrixProductState
from .mpo.mpo import MatrixProductOperator, XxzParams
from .serializer.serializer import NetworkSerializer
from .config.config import RunConfig, SweepConfig
from .dmrg.dmrg import dmrg_ground_state, generalized_dmrg
from .divergence.divergence import (Geometry, max_divergence_edge, max_divergence_exact_mps,
                                    max_divergence_general, mutual_information_vn)

# List all exposed modules (for documentation and `dir()`)
__all__ = ['tensor', 'mps', 'mpo', 'serializer', 'krylov', 'dmrg', 'divergence', 'oracle']
