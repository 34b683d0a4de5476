"""Random valid parameters for each family, by rejection sampling."""

import numpy as np

from bellforge.errors import RegionError
from bellforge.families import build, partial_b_limit


def _theta(rng):
    return rng.uniform(0.05, np.pi / 4 - 0.02)


def _partial_b(rng, theta):
    return rng.choice([-1, 1]) * rng.uniform(0.05, 0.95) * partial_b_limit(theta)


def _draw(kind, rng):
    if kind == "chsh_c":
        return {"c": rng.uniform(0.05, np.pi / 2 - 0.05)}
    if kind == "singletAllSettings":
        b1, a2, b2 = np.sort(rng.uniform(0.05, np.pi - 0.05, 3))
        return {"a2": a2, "b1": b1, "b2": b2}
    if kind == "partialTheta":
        t = _theta(rng)
        return {"theta": t, "b": _partial_b(rng, t)}
    if kind == "ghz":
        t = _theta(rng)
        return {"n": int(rng.integers(2, 5)), "theta": t, "b": _partial_b(rng, t)}
    if kind == "partialTwoParam":
        t = _theta(rng)
        return {"theta": t, "b1": -rng.uniform(0.05, 0.95) * 2 * t, "b2": rng.uniform(0.05, 0.95) * 2 * t}
    if kind == "qutrit":
        return dict(zip(("a1", "a2", "b1", "b2"), rng.uniform(0, 1, 4)))
    if kind == "tiltedChsh" or kind == "wagner":
        return {"theta": _theta(rng)}
    if kind == "limitation":
        return {"q": rng.uniform(0, 4)}
    raise ValueError(kind)


def sample_instance(kind, rng, tries=200):
    """A built instance at random parameters inside the validity region."""
    for _ in range(tries):
        params = _draw(kind, rng)
        try:
            inst = build(kind, **params)
        except RegionError:
            continue
        return inst
    raise RuntimeError(f"no valid {kind} sample in {tries} tries")
