import numpy as np

from cwimpute.core import TrialDataset


def paired_dataset(n_pairs, seed=0, slope=1.5):
    """Every subject appears twice, once observed and once masked, so R is exactly unrelated to Y."""
    rng = np.random.default_rng(seed)
    x = 0.7 + rng.normal(size=n_pairs)
    arm = 1 + (rng.random(n_pairs) < 0.5)
    y = arm + slope * x + rng.normal(size=n_pairs)
    return TrialDataset.from_arrays(
        np.repeat(y, 2), np.repeat(arm, 2), np.repeat(x, 2)[:, None],
        np.tile([1, 0], n_pairs)[:, None], pi=[0.5, 0.5],
    )
