"""Robust statistics shared by the estimation services.

Medians are LOWER medians: for an even number of samples the smaller of the
two central values is returned, so every statistic is an actual sample and
ties resolve deterministically.
"""
import numpy as np


def lower_median(values):
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return float('nan')
    k = (values.size - 1) // 2
    return float(np.partition(values, k)[k])


def mad(values, center=None):
    """Median absolute deviation around ``center`` (the lower median by default)"""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        return float('nan')
    if center is None:
        center = lower_median(values)
    return lower_median(np.abs(values - center))


def robust_threshold(values, multiplier):
    """median + multiplier * MAD"""
    center = lower_median(values)
    return center + multiplier * mad(values, center)


def grouped_lower_median(labels, values, count):
    """Lower median of ``values`` per integer label in [0, count).

    Returns (medians, counts); groups without samples get NaN.
    """
    labels = np.asarray(labels).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    medians = np.full(count, np.nan)
    counts = np.bincount(labels, minlength=count)
    if labels.size == 0:
        return medians, counts

    order = np.lexsort((values, labels))
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    present = counts > 0
    picks = starts[present] + (counts[present] - 1) // 2
    medians[present] = values[order][picks]
    return medians, counts
