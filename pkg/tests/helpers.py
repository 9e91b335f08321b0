import numpy as np

from mgtlab.schemas import MemoryType
from mgtlab.services.dynamics import InitialData, TimeGrid, simulate
from mgtlab.services.kernels import MemoryKernel


def run(params, spectrum, kernel=None, u0=None, u1=None, u2=None, t_end=1.0, h=0.01, **kwargs):
    """simulate with zero defaults for missing initial data"""
    n = spectrum.size
    initial = InitialData(
        np.asarray(u0 if u0 is not None else np.zeros(n), dtype=float),
        np.asarray(u1 if u1 is not None else np.zeros(n), dtype=float),
        np.asarray(u2 if u2 is not None else np.zeros(n), dtype=float),
    )
    return simulate(params, spectrum, kernel or MemoryKernel.zero(), initial, TimeGrid(t_end, h), **kwargs)


def with_memory(params, memory_type, lam=None):
    changes = {"memory_type": MemoryType(memory_type)}
    if lam is not None:
        changes["lambda"] = lam
    return params.with_updates(**changes)
