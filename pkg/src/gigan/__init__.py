"""Graph-informed adversarial learning with an exact divergence oracle.

The package has two halves that keep each other honest:

* a training half (``nn``, ``objectives``, ``training``, ``experiments``)
  that fits generative models against localized critics, one per
  child-parent family of a known Bayesian network, instead of a single
  monolithic critic over the joint; and
* an oracle half (``oracle``) that evaluates the divergences those
  objectives estimate — exactly, on small finite supports — so that the
  structural claims behind the localization (sandwich bounds, duality,
  data processing, subadditivity across families) can be certified
  numerically rather than taken on faith.

``graph`` and ``bayesnet`` hold the shared structure primitives;
``diagnostics`` scores samples against ground truth; ``cli`` exposes the
whole thing as subcommands.
"""

__version__ = "0.1.0"

from . import errors
from .errors import GiganError
from .graph import Dag, FamilySpec, hasse_dag, child_parent_families

# Initialize the oracle subpackage before bayesnet: bayesnet depends on the
# leaf module oracle.pmf, while oracle.operators depends on bayesnet.  Loading
# the subpackage first registers the leaf in sys.modules so both directions
# resolve no matter which module a user imports first.
from . import oracle
from .bayesnet import (
    DiscreteBayesNet,
    LinearGaussianNet,
    BallModel,
    SampleBatch,
    Encoding,
)
from .objectives import FKind, ObjectiveForm
from ._kernels import BACKEND as KERNEL_BACKEND

__all__ = [
    "__version__",
    "errors",
    "oracle",
    "GiganError",
    "Dag",
    "FamilySpec",
    "hasse_dag",
    "child_parent_families",
    "DiscreteBayesNet",
    "LinearGaussianNet",
    "BallModel",
    "SampleBatch",
    "Encoding",
    "FKind",
    "ObjectiveForm",
    "KERNEL_BACKEND",
]
