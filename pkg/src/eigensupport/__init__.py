"""Support recovery for symmetric matrices from noisy commuting observations."""
from .exceptions import (BudgetExceeded, DomainError, EigenSupportError, InvalidArgument,
                         InvalidModel, NonInjectiveSpectrum, NumericalDegeneracy, ParseError,
                         PreprocessingDegenerate)
from .graph_core import ForbiddenSet, Support

__version__ = "0.1.0"
