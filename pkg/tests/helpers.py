import numpy as np

from oscimark.signal import Montage, Recording


def make_rec(data, fs=500.0, labels=None, subject_id="T001"):
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if labels is None:
        labels = tuple(f"C{i}" for i in range(data.shape[0]))
    return Recording(subject_id, Montage(tuple(labels), {}), fs, data)
