"""Domain-decoupled physics-informed surrogates for dynamical systems."""

__version__ = "0.1.0"

from .ansatz import AnsatzCoefficients, eval_g, eval_g_dot, partials_wrt_a  # noqa: E402,F401
from .models import DdPinnModel, PincModel  # noqa: E402,F401
from .sample import SamplingBox  # noqa: E402,F401
from .train import TrainConfig, train_run  # noqa: E402,F401
