"""Control proximity matrices: sector, price level, board size, expertise, geography."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graph import DyadMatrix

EARTH_RADIUS_KM = 6371.0
CONTROL_NAMES = ("F", "T", "B", "E", "G")


def sector_matrix(labels: Sequence[str], sectors: Sequence[str]) -> DyadMatrix:
    s = np.asarray(sectors, dtype=object)
    return DyadMatrix((s[:, None] == s[None, :]).astype(float), tuple(labels), "F")


def proximity_from_differences(k: np.ndarray, labels: Sequence[str], name: str = "") -> DyadMatrix:
    """Map pairwise differences to [0, 1]: the closest dyad gets 1, the farthest 0.

    Bounds come from the strict upper triangle.  When every dyad has the same
    difference the result is all ones.
    """
    k = np.asarray(k, dtype=float)
    n = k.shape[0]
    out = np.ones((n, n))
    if n >= 2:
        upper = k[np.triu_indices(n, 1)]
        kmax, kmin = upper.max(), upper.min()
        if kmax > kmin:
            out = (kmax - k) / (kmax - kmin)
            np.fill_diagonal(out, 1.0)
    return DyadMatrix(out, tuple(labels), name)


def normalized_inverse_diff(values: Sequence[float], labels: Sequence[str] | None = None, name: str = "") -> DyadMatrix:
    v = np.asarray(values, dtype=float)
    if labels is None:
        labels = tuple(str(i) for i in range(len(v)))
    return proximity_from_differences(np.abs(v[:, None] - v[None, :]), labels, name)


def geo_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in kilometres between two (lat, lon) points."""
    return float(pairwise_geo_distances(np.array([a[0], b[0]]), np.array([a[1], b[1]]))[0, 1])


def pairwise_geo_distances(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Great-circle distance matrix on a spherical Earth.

    Same distance as the haversine formula, written in its atan2 form so
    near-antipodal pairs keep full precision.
    """
    phi = np.radians(np.asarray(lat, dtype=float))
    lam = np.radians(np.asarray(lon, dtype=float))
    sp, cp = np.sin(phi), np.cos(phi)
    dlam = lam[:, None] - lam[None, :]
    x = cp[None, :] * np.sin(dlam)
    y = cp[:, None] * sp[None, :] - sp[:, None] * cp[None, :] * np.cos(dlam)
    z = sp[:, None] * sp[None, :] + cp[:, None] * cp[None, :] * np.cos(dlam)
    d = EARTH_RADIUS_KM * np.arctan2(np.hypot(x, y), z)
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return d


@dataclass
class ControlSet:
    """Control matrices on one node set, plus why any are missing."""

    labels: tuple[str, ...]
    matrices: dict[str, DyadMatrix] = field(default_factory=dict)
    unavailable: dict[str, str] = field(default_factory=dict)

    def usable(self) -> list[DyadMatrix]:
        """Present controls that vary across dyads."""
        out = []
        for name in CONTROL_NAMES:
            m = self.matrices.get(name)
            if m is None:
                continue
            u = m.upper()
            if u.size and u.min() != u.max():
                out.append(m)
        return out

    def dropped(self) -> dict[str, str]:
        reasons = dict(self.unavailable)
        kept = {m.name for m in self.usable()}
        for name, m in self.matrices.items():
            if name not in kept:
                reasons[name] = "no variation across dyads"
        return reasons

    def restrict(self, labels: Sequence[str]) -> "ControlSet":
        return ControlSet(tuple(labels), {k: m.restrict(labels) for k, m in self.matrices.items()}, dict(self.unavailable))


def build_controls(
    labels: Sequence[str],
    sectors: Sequence[str],
    mean_log_price: Sequence[float],
    board_size: Sequence[float],
    expert_fraction: Sequence[float],
    coordinates: Sequence[tuple[float, float] | None] | None = None,
) -> ControlSet:
    """Assemble F, T, B, E and (when every corporation is geolocated) G."""
    labels = tuple(labels)
    cs = ControlSet(labels)
    cs.matrices["F"] = sector_matrix(labels, sectors)
    cs.matrices["T"] = normalized_inverse_diff(mean_log_price, labels, "T")
    cs.matrices["B"] = normalized_inverse_diff(board_size, labels, "B")
    cs.matrices["E"] = normalized_inverse_diff(expert_fraction, labels, "E")
    if coordinates is None or any(c is None for c in coordinates):
        cs.unavailable["G"] = "coordinates missing for at least one corporation"
    else:
        lat = np.array([c[0] for c in coordinates])
        lon = np.array([c[1] for c in coordinates])
        cs.matrices["G"] = proximity_from_differences(pairwise_geo_distances(lat, lon), labels, "G")
    return cs


def controls_from_values(values: Mapping[str, Mapping[str, object]], labels: Sequence[str]) -> ControlSet:
    """Convenience wrapper taking per-corporation attribute dicts."""
    return build_controls(
        labels,
        [values["sector"][c] for c in labels],
        [values["mean_log_price"][c] for c in labels],
        [values["board_size"][c] for c in labels],
        [values["expert_fraction"][c] for c in labels],
        [values["coordinates"].get(c) for c in labels],
    )
