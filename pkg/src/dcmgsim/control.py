"""Primary voltage control and consensus-based secondary control.

The primary layer is decentralized state feedback u = K y.  The secondary
layer integrates a consensus protocol on weighted terminal currents so that
I_t / I_t_s equalizes across DGUs; it consumes decoded (watermark-removed)
neighbor measurements.
"""

from dataclasses import dataclass

import numpy as np

CURRENT = 1   # index of the terminal-current component in y


@dataclass
class ConsensusConfig:
    """Consensus weight, common to all DGUs."""

    k_I: float

    def __post_init__(self):
        if self.k_I <= 0:
            raise ValueError("k_I must be > 0")


def primary_input(y, K) -> float:
    """Primary input u = K y."""
    return float(np.asarray(K, dtype=float) @ np.asarray(y, dtype=float))


def consensus_rate(own_y, own_rating, neighbor_ys, neighbor_ratings, k_I) -> float:
    """Secondary-control rate alpha' from own and decoded neighbor measurements.

    alpha' = -sum_j k_I (y[CURRENT]/I_s_own - yhat_j[CURRENT]/I_s_j) over the
    active, unalarmed neighbors supplied in neighbor_ys.
    """
    missing = set(neighbor_ys) - set(neighbor_ratings)
    if missing:
        raise ValueError(f"no rating for neighbors {missing}")
    own_ratio = float(own_y[CURRENT]) / own_rating
    rate = 0.0
    for j, y_j in neighbor_ys.items():
        rate -= k_I * (own_ratio - float(y_j[CURRENT]) / neighbor_ratings[j])
    return rate
