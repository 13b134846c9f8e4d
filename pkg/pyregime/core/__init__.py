from ._errors import *
from ._home import *
from ._math import *
from ._objects import *
from ._modules import *
from ._data import *
from ._basis import *
from ._policy import *
