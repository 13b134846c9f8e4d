from ._mdp import *
from ._planning import *
from ._backward import *
