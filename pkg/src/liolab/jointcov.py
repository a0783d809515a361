"""Joint distribution of intra-scan predicted poses.

Successive predicted states share noise through the recursive
propagation, so their errors are correlated.  ``PoseHistory`` keeps, for
every predicted pose of the current scan interval, its marginal
covariance and its cross-covariance against the newest state.  Advancing
by one step maps every stored cross block by the step transition
(``C <- C @ F_x^T``), which reproduces the stacked joint construction
without materializing it; :func:`stack_joint_covariance` builds the dense
form as a verification oracle.

Relative-transform covariance between a stored pose and the newest pose
follows the second-order composition with optional cross terms.  With
``A = Ad(rel_pose^-1)``:

    cov = A S_k A^T + S_j - A C_jk^T - C_jk A^T        (with cross terms)
    cov = A S_k A^T + S_j                              (independence assumption)

where S_j, S_k are the 6x6 pose marginals and C_jk = Cov(dpose_j, dpose_k).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .liegroup import Pose3, adjoint
from .propagation import PropagationStep

# Dense-stacking oracle refuses above this many entries.
MAX_STACK_ENTRIES = 200


@dataclass
class HistoryEntry:
    t: float
    pose_nominal: Pose3
    P_marginal: np.ndarray
    C_to_latest: np.ndarray
    # transition records into this entry, kept for the dense oracle
    step_F_x: np.ndarray | None = None
    step_F_w: np.ndarray | None = None
    step_Q: np.ndarray | None = None


@dataclass
class RelCovResult:
    rel_pose: Pose3
    cov: np.ndarray
    used_cross_terms: bool


@dataclass
class PoseHistory:
    """Time-ordered predicted poses with marginal and cross covariances."""

    entries: list[HistoryEntry] = field(default_factory=list)
    psd_repair_count: int = 0

    @staticmethod
    def start(t: float, pose: Pose3, p_marginal: np.ndarray) -> "PoseHistory":
        p_marginal = np.asarray(p_marginal, dtype=float)
        return PoseHistory(entries=[HistoryEntry(t, pose, p_marginal, p_marginal.copy())])

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.entries])

    def __len__(self) -> int:
        return len(self.entries)


def advance_history(h: PoseHistory, step: PropagationStep) -> PoseHistory:
    """Append a propagation step, updating every stored cross block in place.

    A frozen past error is unaffected by the new step's noise, so its
    covariance against the advancing state maps by F_x^T alone.
    """
    if not h.entries:
        raise ValueError("history must be started before advancing")
    if step.t <= h.entries[-1].t:
        raise ValueError("step time must follow the last history entry")
    if step.P_after is None:
        raise ValueError("step must carry a propagated covariance")
    f_t = step.F_x.T
    for e in h.entries:
        e.C_to_latest = e.C_to_latest @ f_t
    h.entries.append(
        HistoryEntry(
            step.t,
            step.state_after.pose,
            step.P_after.copy(),
            step.P_after.copy(),
            step_F_x=step.F_x,
            step_F_w=step.F_w,
            step_Q=step.Q,
        )
    )
    return h


def relative_cov(h: PoseHistory, j: int, with_cross: bool = True) -> RelCovResult:
    """Relative pose (latest <- entry j) and its 6x6 covariance."""
    if not 0 <= j < len(h.entries):
        raise IndexError(f"entry index {j} out of range for {len(h.entries)} entries")
    ej = h.entries[j]
    ek = h.entries[-1]
    rel = ek.pose_nominal.inverse() @ ej.pose_nominal
    a = adjoint(rel.inverse())
    sig_j = ej.P_marginal[0:6, 0:6]
    sig_k = ek.P_marginal[0:6, 0:6]
    diag_part = a @ sig_k @ a.T + sig_j
    cov = diag_part.copy()
    if with_cross:
        c_jk = ej.C_to_latest[0:6, 0:6]
        cov = cov - a @ c_jk.T - c_jk @ a.T
    cov = 0.5 * (cov + cov.T)
    # second-order truncation can leave tiny negative eigenvalues; floor
    # them, but only count repairs that exceed roundoff on the input scale
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] < 0.0:
        if vals[0] < -1e-12 * max(np.trace(diag_part), 1e-30):
            h.psd_repair_count += 1
        cov = vecs @ np.diag(np.maximum(vals, 0.0)) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return RelCovResult(rel, cov, with_cross)


def stack_joint_covariance(h: PoseHistory) -> np.ndarray:
    """Dense joint covariance of all stored error states (test oracle).

    Expresses every error state through the initial error and the
    per-step noise, stacks the block-triangular map, and forms the full
    (15k x 15k) covariance explicitly.
    """
    k = len(h.entries)
    if k == 0:
        raise ValueError("empty history")
    if k > MAX_STACK_ENTRIES:
        raise ValueError(f"history too large to stack ({k} > {MAX_STACK_ENTRIES} entries)")
    n = 15
    big = np.zeros((n * k, n * k))
    # columns: initial error, then one mapped-noise block per step
    amap = np.zeros((n * k, n * k))
    for i in range(k):
        amap[i * n : (i + 1) * n, 0:n] = np.eye(n) if i == 0 else (
            h.entries[i].step_F_x @ amap[(i - 1) * n : i * n, 0:n]
        )
        for col in range(1, i + 1):
            prev = amap[(i - 1) * n : i * n, col * n : (col + 1) * n]
            if col == i:
                amap[i * n : (i + 1) * n, col * n : (col + 1) * n] = np.eye(n)
            else:
                amap[i * n : (i + 1) * n, col * n : (col + 1) * n] = h.entries[i].step_F_x @ prev
    blocks = np.zeros((n * k, n * k))
    blocks[0:n, 0:n] = h.entries[0].P_marginal
    for col in range(1, k):
        e = h.entries[col]
        blocks[col * n : (col + 1) * n, col * n : (col + 1) * n] = e.step_F_w @ e.step_Q @ e.step_F_w.T
    big = amap @ blocks @ amap.T
    return 0.5 * (big + big.T)
