from .version import *
from .task import *
from .constants import *
from .tables import *
from .levels import *
from .optimize import *
from .lineshape import *
from .ritz import *
from .analysis import *
from .pipeline import *
