"""FENDI __init__ file

Fidelity-aware ENtanglement DIstribution
"""

from . import main_functions
from .main_functions import *
from . import network as nw
from . import lp
from . import eflow as ef
from . import pflow as pf
from . import fored as fo
from . import fptas as fp
from . import simulator as sim
from . import utility as ut
