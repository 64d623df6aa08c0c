"""Synthetic backbones from internal coordinates, for fixtures and sanity runs.

Chains are grown atom by atom with the natural-extension reference frame
(NeRF) method using Engh & Huber bond geometry. Each residue carries N, CA,
C, O and CB atoms.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist
from scipy.spatial.transform import Rotation

from .structio import ChainResidues, Residue

BOND = {"N-CA": 1.458, "CA-C": 1.525, "C-N": 1.329, "C-O": 1.231, "CA-CB": 1.530}
ANGLE = {"N-CA-C": 111.2, "CA-C-N": 116.2, "C-N-CA": 121.7, "CA-C-O": 120.5, "C-CA-CB": 110.1}
CB_TORSION_N_C_CA_CB = 122.6

SECONDARY = {"helix": (-57.0, -47.0), "strand": (-120.0, 130.0), "ppii": (-75.0, 145.0)}


def place_atom(a, b, c, bond, angle_deg, torsion_deg):
    """Position of atom D with |CD| = bond, angle BCD, torsion ABCD."""
    angle, torsion = np.deg2rad(angle_deg), np.deg2rad(torsion_deg)
    bc = c - b
    bc /= np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n /= np.linalg.norm(n)
    basis = np.stack([bc, np.cross(n, bc), n], axis=1)
    d2 = np.array([-bond * np.cos(angle), bond * np.sin(angle) * np.cos(torsion), bond * np.sin(angle) * np.sin(torsion)])
    return c + basis @ d2


def build_backbone(phi, psi, omega=None):
    """Atom coordinates (L x 5 x 3, order N, CA, C, O, CB) for torsion lists."""
    length = len(phi)
    omega = np.full(length, 180.0) if omega is None else np.asarray(omega)
    coords = np.zeros((length, 5, 3))
    n = np.array([0.0, 0.0, 0.0])
    ca = np.array([BOND["N-CA"], 0.0, 0.0])
    ang = np.deg2rad(ANGLE["N-CA-C"])
    c = ca + BOND["CA-C"] * np.array([-np.cos(ang), np.sin(ang), 0.0])
    for i in range(length):
        if i > 0:
            prev_n, prev_ca, prev_c = coords[i - 1, 0], coords[i - 1, 1], coords[i - 1, 2]
            n = place_atom(prev_n, prev_ca, prev_c, BOND["C-N"], ANGLE["CA-C-N"], psi[i - 1])
            ca = place_atom(prev_ca, prev_c, n, BOND["N-CA"], ANGLE["C-N-CA"], omega[i - 1])
            c = place_atom(prev_c, n, ca, BOND["CA-C"], ANGLE["N-CA-C"], phi[i])
        o = place_atom(n, ca, c, BOND["C-O"], ANGLE["CA-C-O"], psi[i] + 180.0)
        cb = place_atom(n, c, ca, BOND["CA-CB"], ANGLE["C-CA-CB"], CB_TORSION_N_C_CA_CB)
        coords[i] = (n, ca, c, o, cb)
    return coords


def random_torsions(length, rng, segment_range=(4, 9), jitter=8.0):
    """phi/psi lists made of random secondary-structure segments."""
    phi, psi = [], []
    kinds = list(SECONDARY)
    while len(phi) < length:
        kind = kinds[rng.integers(len(kinds))]
        seg = int(rng.integers(segment_range[0], segment_range[1] + 1))
        p, s = SECONDARY[kind]
        phi += list(p + rng.normal(0.0, jitter, seg))
        psi += list(s + rng.normal(0.0, jitter, seg))
    return np.array(phi[:length]), np.array(psi[:length])


def chain_from_coords(chain_id, coords, start=1, with_cb=None):
    """Wrap an L x 5 x 3 atom array as :class:`ChainResidues`."""
    residues = []
    for i, (n, ca, c, o, cb) in enumerate(coords):
        has_cb = True if with_cb is None else bool(with_cb[i])
        heavy = np.array([n, ca, c, o, cb] if has_cb else [n, ca, c, o])
        residues.append(
            Residue(
                seq_position=start + i,
                name="ALA" if has_cb else "GLY",
                ca=ca.copy(),
                n=n.copy(),
                cb=cb.copy() if has_cb else None,
                c=c.copy(),
                heavy_atoms=heavy,
            )
        )
    return ChainResidues(chain_id, residues)


def _all_atoms(coords):
    return coords.reshape(-1, 3)


def dock(coords_a, coords_b, rng, contact_distance=3.8):
    """Rigidly move chain B next to chain A with closest heavy atoms at ``contact_distance``."""
    rot = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    b = _all_atoms(coords_b) - _all_atoms(coords_b).mean(axis=0)
    b = b @ rot.T
    a = _all_atoms(coords_a)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    center = a.mean(axis=0)
    lo, hi = 0.0, 200.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        gap = cdist(a, b + center + mid * direction).min()
        if gap < contact_distance:
            lo = mid
        else:
            hi = mid
    moved = b + center + hi * direction
    return moved.reshape(coords_b.shape)


def synthetic_complex(len_a, len_b, seed, contact_distance=3.5, min_contacts=12, max_tries=50, poses=16):
    """Two docked random chains with at least ``min_contacts`` 6 Å contacts.

    For each pair of backbones, ``poses`` random docking poses are tried and
    the one with the most contacts is kept.
    """
    from .structio import derive_contact_labels

    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        coords_a = build_backbone(*random_torsions(len_a, rng))
        coords_b0 = build_backbone(*random_torsions(len_b, rng))
        chain_a = chain_from_coords("A", coords_a)
        best = None
        for _ in range(poses):
            chain_b = chain_from_coords("B", dock(coords_a, coords_b0, rng, contact_distance))
            labels = derive_contact_labels(chain_a, chain_b)
            if best is None or labels.sum() > best[1].sum():
                best = (chain_b, labels)
        if best[1].sum() >= min_contacts:
            return chain_a, best[0], best[1]
    raise RuntimeError("could not build a complex with enough contacts")


def helix_dimer(length=20, separation=9.5, seed=0):
    """Two antiparallel ideal helices whose axes are ``separation`` Å apart."""
    phi, psi = np.full(length, -57.0), np.full(length, -47.0)
    coords = build_backbone(phi, psi)
    ca = coords[:, 1]
    centered = coords - ca.mean(axis=0)
    # principal axis of the CA trace -> z
    _, _, vt = np.linalg.svd(ca - ca.mean(axis=0))
    axis = vt[0]
    rot, _ = Rotation.align_vectors([[0, 0, 1]], [axis])
    a = centered.reshape(-1, 3) @ rot.as_matrix().T
    flip = Rotation.from_euler("x", 180, degrees=True).as_matrix()
    rng = np.random.default_rng(seed)
    spin = Rotation.from_euler("z", rng.uniform(0, 360), degrees=True).as_matrix()
    b = a @ flip.T @ spin.T + np.array([separation, 0.0, 0.0])
    return a.reshape(coords.shape), b.reshape(coords.shape)


def format_pdb(chains):
    """Fixed-column PDB text for a list of :class:`ChainResidues`.

    Heavy atoms other than N, CA, C and CB are written as O (the only other
    atom synthetic residues carry).
    """
    lines = []
    serial = 1
    for chain in chains:
        for r in chain.residues:
            named = [("N", r.n), ("CA", r.ca), ("C", r.c), ("CB", r.cb)]
            known = [x for _, x in named if x is not None]
            others = [x for x in r.heavy_atoms if not any(np.allclose(x, k) for k in known)]
            atoms = named[:3] + [("O", x) for x in others[:1]] + named[3:]
            for name, xyz in atoms:
                if xyz is None:
                    continue
                lines.append(
                    f"ATOM  {serial:5d}  {name:<3s} {r.name:>3s} {chain.chain_id}{r.seq_position:4d}    "
                    f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}{1.0:6.2f}{0.0:6.2f}          {name[0]:>2s}"
                )
                serial += 1
        lines.append("TER")
    lines.append("END")
    return "\n".join(lines) + "\n"
