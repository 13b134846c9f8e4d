from . import functional
from ._proximity import *
from ._kernel import *
from ._model import *
from ._loss import *
from ._oracle import *
from ._fit import *
from .functional import (
    SupportSet,
    bias_bound,
    kkt_multipliers,
    proximal_bellman_value,
    sparse_policy,
    support_set,
)
