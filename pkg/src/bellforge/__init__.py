"""bellforge: Bell expressions tailored to target states via sums of squares.

Submodules: ``algebra`` (formal polynomials), ``hilbert`` (matrix
realizations), ``variational`` (stationarity and Hessian), ``sos``
(certificates), ``bounds`` (local, NPA, geometry), ``selftest`` (swap
isometry), ``families`` (catalogued expressions) and ``cli``.
"""

from .algebra import FormalPolynomial, Scenario
from .bounds import local_bound, npa_upper_bound
from .errors import BellforgeError
from .families import FamilyInstance, build
from .hilbert import BellExpression, Behavior, KetState, Measurements, Realization, behavior, bell_value
from .sos import SOSCertificate, sos_expand

__version__ = "0.1.0"

__all__ = [
    "BellExpression", "Behavior", "BellforgeError", "FamilyInstance", "FormalPolynomial",
    "KetState", "Measurements", "Realization", "SOSCertificate", "Scenario",
    "behavior", "bell_value", "build", "local_bound", "npa_upper_bound", "sos_expand",
]
