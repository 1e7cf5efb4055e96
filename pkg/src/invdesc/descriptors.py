"""Descriptor containers shared by the analytic and optimization paths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# column order of the moving-frame invariant arrays
VECTOR_FRAME_COLS = ("omega_tau", "omega_kappa")
SCREW_FRAME_COLS = ("omega_tau", "omega_kappa", "v_t", "v_b")


@dataclass
class SingularityFlags:
    """Per-sample singularity markers for the analytic formulas.

    type1: the direction vector vanishes (whole moving frame arbitrary).
    type2: the direction is parallel to its derivative (normal/binormal
    arbitrary).  type1 implies the type2 quantities are undefined as well.
    """

    type1: np.ndarray
    type2: np.ndarray
    tol1: float
    tol2: float

    def any(self) -> bool:
        return bool(np.any(self.type1) or np.any(self.type2))


@dataclass
class VectorDescriptor:
    """Invariant descriptor of a 3-vector trajectory.

    object_invariant[k] is the signed magnitude along the moving tangent;
    frame_invariant rows are (omega_tau, omega_kappa) per integration step
    (one fewer row than samples); frames are the moving-frame rotations.
    """

    xi: np.ndarray
    object_invariant: np.ndarray          # (N,)
    frame_invariant: np.ndarray           # (N-1, 2)
    frames: np.ndarray                    # (N, 3, 3)
    flags: SingularityFlags | None = None

    def __len__(self) -> int:
        return len(self.xi)

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])

    def moving_frame_rates(self) -> np.ndarray:
        """Step invariants as full 3-vectors (omega_tau, 0, omega_kappa)."""
        out = np.zeros((len(self.frame_invariant), 3))
        out[:, 0] = self.frame_invariant[:, 0]
        out[:, 2] = self.frame_invariant[:, 1]
        return out


@dataclass
class ScrewDescriptor:
    """Invariant descriptor of a 6-vector screw trajectory.

    object_invariant rows are (a, b): components of the screw along its
    axis; frame_invariant rows are (omega_tau, omega_kappa, v_t, v_b) per
    step; frames are the moving axis-frame poses.
    """

    xi: np.ndarray
    object_invariant: np.ndarray          # (N, 2)
    frame_invariant: np.ndarray           # (N-1, 4)
    frames: np.ndarray                    # (N, 4, 4)
    flags: SingularityFlags | None = None

    def __len__(self) -> int:
        return len(self.xi)

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])

    def moving_frame_rates(self) -> np.ndarray:
        """Step invariants as 6-vectors (omega_tau, 0, omega_kappa, v_t, 0, v_b)."""
        out = np.zeros((len(self.frame_invariant), 6))
        out[:, 0] = self.frame_invariant[:, 0]
        out[:, 2] = self.frame_invariant[:, 1]
        out[:, 3] = self.frame_invariant[:, 2]
        out[:, 5] = self.frame_invariant[:, 3]
        return out

    def object_screws(self) -> np.ndarray:
        """Object invariants as 6-vectors (a, 0, 0, b, 0, 0)."""
        out = np.zeros((len(self.object_invariant), 6))
        out[:, 0] = self.object_invariant[:, 0]
        out[:, 3] = self.object_invariant[:, 1]
        return out
