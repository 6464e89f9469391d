"""Small networks and builders shared across test modules."""

import numpy as np

from nkscreen.grid import Network


def ring3(limits=(5.0, 5.0, 5.0), pmax=(10.0, 10.0, 0.0), cost=(1.0, 2.0, 0.0),
          demand=(0.0, 0.0, 1.0)):
    lim = np.asarray(limits, dtype=float)
    return Network(
        name="ring3",
        n=3,
        lines=np.array([[0, 1], [1, 2], [0, 2]]),
        susceptance=np.ones(3),
        f_lower=-lim,
        f_upper=lim,
        pmin=np.zeros(3),
        pmax=np.asarray(pmax, dtype=float),
        cost=np.asarray(cost, dtype=float),
        demand=np.asarray(demand, dtype=float),
        slack=0,
    ).validate()


def square_toy(n_samples=400, t=0.8, lim=2.0, seed=0):
    """2-D toy classification set: label 1 = outside the square |x|_inf <= t."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-lim, lim, size=(n_samples, 2))
    A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    b = np.full(4, float(t))
    y = (X @ A.T > b).any(axis=1).astype(float)
    return A, b, X, y


def two_bus(limit=150.0):
    return Network(
        name="two",
        n=2,
        lines=np.array([[0, 1]]),
        susceptance=np.array([1.0]),
        f_lower=np.array([-limit]),
        f_upper=np.array([limit]),
        pmin=np.zeros(2),
        pmax=np.array([200.0, 0.0]),
        cost=np.array([10.0, 0.0]),
        demand=np.array([0.0, 100.0]),
        slack=0,
    ).validate()
