from ._propensity import *
from ._ggq import *
from ._vlearning import *
