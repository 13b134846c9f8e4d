from ._config import *
from ._io import *
from ._artifact import *
from ._commands import *
from ._main import *
