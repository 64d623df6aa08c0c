"""Rigid-motion invariant edge features from backbone coordinates.

Per residue we build a local frame from consecutive Cα positions and an
amide-plane normal from Cα, Cβ and N. Per directed edge (i -> j) the feature
tuple is

* ``f1``: 16 Gaussian radial basis values of the Cα distance (0-20 Å),
* ``f2``: unit direction to ``x_j`` expressed in frame ``i``,
* ``f3``: unit quaternion (w, x, y, z) of ``O_i^T O_j``,
* ``f4``: angle between the two amide normals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometryError

NUM_RBF = 16
RBF_MAX = 20.0
RBF_CENTERS = np.linspace(0.0, RBF_MAX, NUM_RBF)
RBF_SIGMA = RBF_MAX / (NUM_RBF - 1)
DEGENERATE_TOL = 1e-8


@dataclass
class LocalFrame:
    origin: np.ndarray
    rotation: np.ndarray
    degenerate: bool = False


@dataclass
class AmideNormal:
    vector: np.ndarray
    degenerate: bool = False


@dataclass
class EdgeGeometry:
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    raw_distance: float

    def as_vector(self):
        return np.concatenate([self.f1, self.f2, self.f3, self.f4])


def _interior_rotations(x):
    """Rotations for residues 1..A-2 plus a validity mask (vectorized)."""
    diff = x[1:] - x[:-1]
    lengths = np.linalg.norm(diff, axis=1)
    ok_len = lengths >= DEGENERATE_TOL
    u = diff / np.where(ok_len, lengths, 1.0)[:, None]
    u_prev, u_next = u[:-1], u[1:]
    cross = np.cross(u_prev, u_next)
    cross_norm = np.linalg.norm(cross, axis=1)
    bis = u_prev - u_next
    bis_norm = np.linalg.norm(bis, axis=1)
    valid = ok_len[:-1] & ok_len[1:] & (cross_norm >= DEGENERATE_TOL) & (bis_norm >= DEGENERATE_TOL)
    n = cross / np.where(valid, cross_norm, 1.0)[:, None]
    b = bis / np.where(valid, bis_norm, 1.0)[:, None]
    rot = np.stack([b, n, np.cross(b, n)], axis=-1)
    return rot, valid


def backbone_frames(ca_coords):
    """Local reference frame per residue from consecutive Cα positions.

    Interior residues get ``[b, n, b x n]`` from the unit bond vectors on
    either side. Terminal and degenerate residues copy the rotation of the
    nearest valid interior residue (lower index on ties) and are flagged.
    """
    x = np.asarray(ca_coords, dtype=np.float64).reshape(-1, 3)
    if len(x) < 3:
        raise DegenerateGeometryError(f"need at least 3 residues for backbone frames, got {len(x)}")
    rot, valid = _interior_rotations(x)
    valid_idx = np.flatnonzero(valid) + 1
    if valid_idx.size == 0:
        raise DegenerateGeometryError("no residue has a non-degenerate backbone frame")
    rotations = np.empty((len(x), 3, 3))
    flags = np.ones(len(x), dtype=bool)
    rotations[valid_idx] = rot[valid_idx - 1]
    flags[valid_idx] = False
    for i in np.flatnonzero(flags):
        nearest = valid_idx[np.argmin(np.abs(valid_idx - i))]
        rotations[i] = rotations[nearest]
    return [LocalFrame(origin=x[i].copy(), rotation=rotations[i], degenerate=bool(flags[i])) for i in range(len(x))]


def residue_frames(n_coords, ca_coords, c_coords):
    """Fallback frames from each residue's own N, Cα, C atoms (Gram-Schmidt)."""
    n_coords, ca, c_coords = (np.asarray(v, dtype=np.float64).reshape(-1, 3) for v in (n_coords, ca_coords, c_coords))
    e1 = c_coords - ca
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    v = n_coords - ca
    e2 = v - (v * e1).sum(axis=1, keepdims=True) * e1
    norm = np.linalg.norm(e2, axis=1, keepdims=True)
    if np.any(norm < DEGENERATE_TOL):
        raise DegenerateGeometryError("collinear N, CA, C atoms")
    e2 /= norm
    rot = np.stack([e1, e2, np.cross(e1, e2)], axis=-1)
    return [LocalFrame(origin=ca[i].copy(), rotation=rot[i], degenerate=True) for i in range(len(ca))]


def amide_normal(ca, cb, n):
    """Unit normal ``(x_CA - x_CB) x (x_CB - x_N)``; degenerate when collinear."""
    ca, cb, n = (np.asarray(v, dtype=np.float64) for v in (ca, cb, n))
    u = np.cross(ca - cb, cb - n)
    norm = np.linalg.norm(u)
    if norm < DEGENERATE_TOL:
        return AmideNormal(np.zeros(3), degenerate=True)
    return AmideNormal(u / norm)


def amide_normals(ca, cb, n):
    """Vectorized :func:`amide_normal`; returns (A x 3 unit vectors, degenerate mask)."""
    u = np.cross(np.asarray(ca) - cb, np.asarray(cb) - n)
    norm = np.linalg.norm(u, axis=-1)
    degenerate = norm < DEGENERATE_TOL
    u = np.where(degenerate[:, None], 0.0, u / np.where(degenerate, 1.0, norm)[:, None])
    return u, degenerate


def rbf_encode(d):
    """Gaussian radial basis encoding of distance(s) ``d`` (Å) into 16 channels."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    return np.exp(-((d[..., None] - RBF_CENTERS) ** 2) / (2.0 * RBF_SIGMA**2))


def relative_direction(x_i, x_j, frame_i):
    delta = np.asarray(x_j, dtype=np.float64) - np.asarray(x_i, dtype=np.float64)
    dist = np.linalg.norm(delta)
    if dist < DEGENERATE_TOL:
        raise DegenerateGeometryError("coincident points have no direction")
    return frame_i.rotation.T @ (delta / dist)


def _canonical_sign(q):
    # first nonzero coefficient (w first) made positive
    lead = np.where(np.abs(q) > 0, q, 0.0)
    first = np.argmax(np.abs(q) > 0, axis=-1)
    sign = np.sign(np.take_along_axis(lead, first[..., None], axis=-1))
    sign = np.where(sign == 0, 1.0, sign)
    return q * sign


def rotation_to_quaternion(R, tol=1e-6):
    """Unit quaternion (w, x, y, z) with ``w >= 0`` for rotation matrix/matrices ``R``.

    Accepts a single 3 x 3 matrix or a stack (..., 3, 3). Raises ``ValueError``
    for matrices that are not proper rotations within ``tol``.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) rotation matrices, got {R.shape}")
    single = R.ndim == 2
    R = R.reshape(-1, 3, 3)
    eye_err = np.abs(np.einsum("nji,njk->nik", R, R) - np.eye(3)).max(axis=(1, 2))
    det = np.linalg.det(R)
    if np.any(eye_err > tol) or np.any(np.abs(det - 1.0) > tol):
        raise ValueError("input is not a proper rotation matrix")

    m00, m11, m22 = R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]
    trace = m00 + m11 + m22
    cand = np.stack([trace, m00, m11, m22], axis=1)
    pick = np.argmax(cand, axis=1)
    q = np.empty((len(R), 4))
    for case in range(4):
        sel = pick == case
        if not np.any(sel):
            continue
        r = R[sel]
        if case == 0:
            s = np.sqrt(1.0 + trace[sel]) * 2.0
            q[sel] = np.stack([0.25 * s, (r[:, 2, 1] - r[:, 1, 2]) / s, (r[:, 0, 2] - r[:, 2, 0]) / s, (r[:, 1, 0] - r[:, 0, 1]) / s], axis=1)
        elif case == 1:
            s = np.sqrt(1.0 + r[:, 0, 0] - r[:, 1, 1] - r[:, 2, 2]) * 2.0
            q[sel] = np.stack([(r[:, 2, 1] - r[:, 1, 2]) / s, 0.25 * s, (r[:, 0, 1] + r[:, 1, 0]) / s, (r[:, 0, 2] + r[:, 2, 0]) / s], axis=1)
        elif case == 2:
            s = np.sqrt(1.0 + r[:, 1, 1] - r[:, 0, 0] - r[:, 2, 2]) * 2.0
            q[sel] = np.stack([(r[:, 0, 2] - r[:, 2, 0]) / s, (r[:, 0, 1] + r[:, 1, 0]) / s, 0.25 * s, (r[:, 1, 2] + r[:, 2, 1]) / s], axis=1)
        else:
            s = np.sqrt(1.0 + r[:, 2, 2] - r[:, 0, 0] - r[:, 1, 1]) * 2.0
            q[sel] = np.stack([(r[:, 1, 0] - r[:, 0, 1]) / s, (r[:, 0, 2] + r[:, 2, 0]) / s, (r[:, 1, 2] + r[:, 2, 1]) / s, 0.25 * s], axis=1)
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q = _canonical_sign(q)
    return q[0] if single else q


def quaternion_to_rotation(q):
    """Rotation matrix from a unit quaternion (w, x, y, z)."""
    w, x, y, z = np.asarray(q, dtype=np.float64)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def amide_angle(u_i, u_j):
    """Angle in [0, pi] between two amide normals; 0 if either is degenerate."""
    if u_i.degenerate or u_j.degenerate:
        return 0.0
    return float(np.arccos(np.clip(np.dot(u_i.vector, u_j.vector), -1.0, 1.0)))


def edge_geometric_features(i, j, chain, frames, normals):
    """Feature tuple for the directed edge ``i -> j`` of ``chain``."""
    if i == j:
        raise ValueError("self-edges have no geometric features")
    x = chain.ca_coords if hasattr(chain, "ca_coords") else np.asarray(chain)
    delta = x[j] - x[i]
    dist = float(np.linalg.norm(delta))
    return EdgeGeometry(
        f1=rbf_encode(dist),
        f2=relative_direction(x[i], x[j], frames[i]),
        f3=rotation_to_quaternion(frames[i].rotation.T @ frames[j].rotation),
        f4=np.array([amide_angle(normals[i], normals[j])]),
        raw_distance=dist,
    )


def batch_edge_features(ca, rotations, normals, normal_degenerate, src, dst):
    """Vectorized edge features for arrays of sources and destinations.

    Returns ``(f1, f2, f3, f4, raw_distance)`` with leading dimension E.
    """
    delta = ca[dst] - ca[src]
    dist = np.linalg.norm(delta, axis=1)
    if np.any(dist < DEGENERATE_TOL):
        raise DegenerateGeometryError("edge between coincident residues")
    unit = delta / dist[:, None]
    rot_i = rotations[src]
    f2 = np.einsum("eji,ej->ei", rot_i, unit)
    rel = np.einsum("eji,ejk->eik", rot_i, rotations[dst])
    f3 = rotation_to_quaternion(rel)
    dots = np.clip((normals[src] * normals[dst]).sum(axis=1), -1.0, 1.0)
    f4 = np.where(normal_degenerate[src] | normal_degenerate[dst], 0.0, np.arccos(dots))
    return rbf_encode(dist), f2, f3, f4[:, None], dist
