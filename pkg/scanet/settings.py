from contextlib import contextmanager
import os
from typing import Optional

import numpy as np


THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class Settings:
    dtype: type = np.float32
    accumulate_dtype: type = np.float64
    grad_enabled: bool = True
    single_thread: bool = False


def update_settings(dtype: Optional[type] = None,
                    grad_enabled: Optional[bool] = None,
                    single_thread: Optional[bool] = None):
    if dtype is not None:
        Settings.dtype = np.dtype(dtype).type
    if grad_enabled is not None:
        Settings.grad_enabled = grad_enabled
    if single_thread is not None:
        Settings.single_thread = single_thread
        if single_thread:
            limit_blas_threads()


def limit_blas_threads():
    """Ask BLAS for one thread unless the environment already chose a count.

    Only libraries loaded after this call honor the variables; a BLAS that
    numpy already initialized keeps its pool, so set them before importing
    numpy for a strictly single-threaded process.
    """
    for name in THREAD_ENV_VARS:
        os.environ.setdefault(name, "1")


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    previous = Settings.grad_enabled
    Settings.grad_enabled = False
    try:
        yield
    finally:
        Settings.grad_enabled = previous


@contextmanager
def precision(dtype):
    """Create tensors with ``dtype`` inside the block (float64 for verification)."""
    previous = Settings.dtype
    Settings.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        Settings.dtype = previous
