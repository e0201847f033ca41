"""Five archetypal daily household load shapes (24 hourly values, max 1)."""

from __future__ import annotations

import numpy as np

HOURS = np.arange(24, dtype=float)


def _bump(center: float, width: float) -> np.ndarray:
    d = np.minimum(np.abs(HOURS - center), 24 - np.abs(HOURS - center))
    return np.exp(-0.5 * (d / width) ** 2)


def _norm(x: np.ndarray) -> np.ndarray:
    return x / x.max()


# irregular daytime pattern whose single largest value sits at noon
_SCATTER = np.array([
    0.30, 0.22, 0.35, 0.20, 0.28, 0.45, 0.25, 0.55, 0.35, 0.62, 0.40, 0.70,
    1.00, 0.50, 0.68, 0.38, 0.60, 0.30, 0.52, 0.33, 0.48, 0.25, 0.40, 0.28,
])

ARCHETYPES = {
    "midday": _norm(0.15 + _bump(13.0, 2.5)),
    "twin_peak": _norm(0.15 + _bump(12.5, 1.8) + 0.95 * _bump(20.0, 1.5)),
    "rising": _norm(0.1 + HOURS / 23.0),
    "morning_night": _norm(0.15 + _bump(7.0, 1.5) + _bump(22.0, 1.5)),
    "scattered": _norm(_SCATTER),
}
ARCHETYPE_NAMES = tuple(ARCHETYPES)


def archetype(name: str) -> np.ndarray:
    try:
        return ARCHETYPES[name].copy()
    except KeyError:
        raise ValueError(f"unknown load shape {name!r}; choose from {', '.join(ARCHETYPE_NAMES)}") from None


def synthetic_shapes(n_per: int, noise_sd: float, rng: np.random.Generator):
    """Noisy normalized copies of each archetype with ground-truth labels."""
    shapes, labels = [], []
    for label, name in enumerate(ARCHETYPE_NAMES):
        base = ARCHETYPES[name]
        for _ in range(n_per):
            x = np.clip(base * rng.uniform(0.7, 1.3) + rng.normal(0.0, noise_sd, 24), 0.0, None)
            shapes.append(x / x.max())
            labels.append(label)
    return np.array(shapes), np.array(labels)
