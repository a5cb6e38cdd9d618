import numpy as np

from stf.fitting import FitProblem, ResidualSpec, TimeWindow
from stf.observation import IdentityModel, Observation
from stf.trajectory import BasisSpec


def line_problem(times, values, m=2, weights=None, spec=None):
    values = np.asarray(values, dtype=float).reshape(len(times), -1)
    weights = np.ones(len(times)) if weights is None else weights
    obs = tuple(Observation(t, 0, v, w) for t, v, w in zip(times, values, weights))
    spec = spec or ResidualSpec(IdentityModel(values.shape[1]))
    return FitProblem(TimeWindow(min(times), max(times)), obs, spec, BasisSpec("monomial", m))
