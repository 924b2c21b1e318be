# Data providers package initialization
from .nominal_traces import NominalTraceProvider, NominalTraces
