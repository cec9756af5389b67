"""Thin FFT wrapper so every transform honours one worker count."""

import os

import scipy.fft as _sfft

_workers = None


def _env_workers():
    value = os.environ.get("MODEFORGE_THREADS")
    if value:
        return max(1, int(value))
    return None


def set_threads(n):
    """Set the number of FFT worker threads (``None`` means all cores).

    Results do not depend on this value: pocketfft splits work over
    independent 1-D transforms, so the summation order is unchanged.
    """
    global _workers
    _workers = None if n is None else max(1, int(n))


def get_threads():
    env = _env_workers()
    if env is not None:
        return env
    if _workers is None:
        return os.cpu_count() or 1
    return _workers


def fft2(a):
    return _sfft.fft2(a, axes=(-2, -1), workers=get_threads())


def ifft2(a):
    return _sfft.ifft2(a, axes=(-2, -1), workers=get_threads())


def fftfreq(n, d):
    return _sfft.fftfreq(n, d)
