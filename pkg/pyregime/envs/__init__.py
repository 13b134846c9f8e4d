from ._env import *
from ._glucose import *
from ._rollout import *
