"""Active numerical settings.

Tolerances used deep inside the kernels (finite-difference steps, quadrature
accuracy, Newton limits) are read from a context variable so a run
configuration can change them without threading arguments through every call.
"""

from __future__ import annotations

import contextvars
from concurrent.futures import Executor
from concurrent.futures import Future

from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field


class NumericsConfig(BaseModel):
    """Numerical tolerances shared by all modules."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    fd_step: float = Field(1e-5, gt=0, description="Relative central-difference step h = fd_step*(1+|x|)")
    quad_epsrel: float = Field(1e-11, gt=0, description="Relative tolerance of energy quadratures")
    quad_limit: int = Field(400, ge=50, description="Subinterval limit of adaptive quadrature")
    degeneracy_factor: float = Field(1e-12, gt=0, description="P.P threshold factor: eps_P = factor*(1+|F|^2)")
    projection_tol: float = Field(1e-12, gt=0, description="Target |f| of the hypersurface projection")
    projection_max_iter: int = Field(50, ge=1, description="Newton iterations before a projection failure")
    underflow_cutoff: float = Field(700.0, gt=0, description="exp(-B) is reported as 0 once B exceeds this")


class use_numerics:  # noqa: N801
    """Context manager activating a NumericsConfig for the enclosed calls."""

    def __init__(self, cfg: NumericsConfig):
        self.cfg = cfg

    def __enter__(self):
        self._tok = _active_numerics.set(self.cfg)
        return self.cfg

    def __exit__(self, et, e, tb):
        _active_numerics.reset(self._tok)


def numerics() -> NumericsConfig:
    """Return the active numerical settings."""
    return _active_numerics.get()


def submit(pool: Executor, fn, /, *args, **kwargs) -> Future:
    """Submit ``fn`` to ``pool`` so it runs with the caller's active settings."""
    return pool.submit(contextvars.copy_context().run, fn, *args, **kwargs)


_active_numerics = contextvars.ContextVar[NumericsConfig]("fewtherm_numerics", default=NumericsConfig())
