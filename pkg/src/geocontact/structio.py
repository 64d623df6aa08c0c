"""Minimal PDB reading and inter-chain contact labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DegenerateGeometryError, EmptyStructureError, PDBParseError

logger = logging.getLogger(__name__)

CB_BOND_LENGTH = 1.522
# half of the ideal tetrahedral angle (109.47 deg) between the two out-of-plane bonds
_TETRA_HALF = np.deg2rad(109.4712206 / 2.0)


@dataclass(frozen=True)
class AtomRecord:
    serial: int
    atom_name: str
    residue_seq: int
    chain_id: str
    xyz: tuple
    element: str
    residue_name: str = "UNK"
    alt_loc: str = ""


@dataclass
class Residue:
    seq_position: int
    name: str
    ca: np.ndarray
    n: np.ndarray
    cb: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    heavy_atoms: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def effective_cbeta(self):
        """Recorded Cβ, else a virtual one from N/Cα/C, else Cα."""
        if self.cb is not None:
            return self.cb
        if self.c is not None:
            try:
                return virtual_cbeta(self.n, self.ca, self.c)
            except DegenerateGeometryError:
                pass
        return self.ca


@dataclass
class ChainResidues:
    chain_id: str
    residues: list
    dropped_residues: int = 0

    def __len__(self):
        return len(self.residues)

    @property
    def seq_positions(self):
        return np.array([r.seq_position for r in self.residues], dtype=np.int64)

    @property
    def ca_coords(self):
        return np.array([r.ca for r in self.residues], dtype=np.float64).reshape(-1, 3)

    def transformed(self, rotation, translation):
        """Copy of the chain under ``x -> R x + t``."""
        rotation = np.asarray(rotation, dtype=np.float64)
        translation = np.asarray(translation, dtype=np.float64)

        def move(x):
            return None if x is None else np.asarray(x) @ rotation.T + translation

        residues = [
            Residue(
                seq_position=r.seq_position,
                name=r.name,
                ca=move(r.ca),
                n=move(r.n),
                cb=move(r.cb),
                c=move(r.c),
                heavy_atoms=move(r.heavy_atoms).reshape(-1, 3),
            )
            for r in self.residues
        ]
        return ChainResidues(self.chain_id, residues, self.dropped_residues)


def _infer_element(atom_name):
    letters = "".join(ch for ch in atom_name if ch.isalpha())
    return letters[:1].upper() if letters else ""


def parse_atom_line(line, line_number=None):
    """Parse one fixed-column ATOM record."""
    try:
        x = float(line[30:38])
        y = float(line[38:46])
        z = float(line[46:54])
    except ValueError:
        raise PDBParseError("malformed coordinate field", line_number) from None
    if not all(np.isfinite((x, y, z))):
        raise PDBParseError("non-finite coordinate", line_number)
    try:
        serial = int(line[6:11])
    except ValueError:
        serial = 0
    try:
        residue_seq = int(line[22:26])
    except ValueError:
        raise PDBParseError("malformed residue sequence number", line_number) from None
    atom_name = line[12:16].strip()
    if not atom_name:
        raise PDBParseError("empty atom name", line_number)
    element = line[76:78].strip().upper() if len(line) >= 77 else ""
    return AtomRecord(
        serial=serial,
        atom_name=atom_name,
        residue_seq=residue_seq,
        chain_id=line[21:22] if len(line) > 21 else " ",
        xyz=(x, y, z),
        element=element or _infer_element(atom_name),
        residue_name=line[17:20].strip() or "UNK",
        alt_loc=line[16:17].strip(),
    )


def parse_pdb(text):
    """Parse PDB text into one :class:`ChainResidues` per chain identifier.

    Only ATOM records of the first model are read. Residues lacking Cα or N
    are dropped and counted in ``ChainResidues.dropped_residues``.
    """
    if not isinstance(text, str):
        text = text.read()
    chains = {}  # chain_id -> {residue_seq: {"name": str, "atoms": {atom_name: (xyz, element)}}}
    for lineno, line in enumerate(text.splitlines(), start=1):
        record = line[:6]
        if record.startswith("ENDMDL"):
            break
        if record != "ATOM  " and record.rstrip() != "ATOM":
            continue
        atom = parse_atom_line(line, lineno)
        residues = chains.setdefault(atom.chain_id, {})
        res = residues.setdefault(atom.residue_seq, {"name": atom.residue_name, "atoms": {}})
        # alternate locations after the first occurrence of an atom are ignored
        res["atoms"].setdefault(atom.atom_name, (np.array(atom.xyz, dtype=np.float64), atom.element))

    out = []
    for chain_id, residues in chains.items():
        kept, dropped = [], 0
        for seq in sorted(residues):
            res = residues[seq]
            atoms = res["atoms"]
            if "CA" not in atoms or "N" not in atoms:
                dropped += 1
                continue
            heavy = [xyz for xyz, el in atoms.values() if el not in ("H", "D")]
            kept.append(
                Residue(
                    seq_position=seq,
                    name=res["name"],
                    ca=atoms["CA"][0],
                    n=atoms["N"][0],
                    cb=atoms["CB"][0] if "CB" in atoms else None,
                    c=atoms["C"][0] if "C" in atoms else None,
                    heavy_atoms=np.array(heavy, dtype=np.float64).reshape(-1, 3),
                )
            )
        if dropped:
            logger.warning("chain %s: dropped %d residue(s) missing CA or N", chain_id, dropped)
        if kept:
            out.append(ChainResidues(chain_id, kept, dropped))
    if not out:
        raise EmptyStructureError("no chain contains a residue with both CA and N atoms")
    return out


def read_pdb(path):
    with open(path) as fh:
        return parse_pdb(fh.read())


def _residue_atoms(chain, atom_set):
    blocks, owners = [], []
    for idx, r in enumerate(chain.residues):
        if atom_set == "ca" or len(r.heavy_atoms) == 0:
            atoms = np.asarray(r.ca, dtype=np.float64).reshape(1, 3)
        else:
            atoms = r.heavy_atoms
        blocks.append(atoms)
        owners.append(np.full(len(atoms), idx))
    return np.vstack(blocks), np.concatenate(owners)


def derive_contact_labels(a, b, threshold=6.0, atom_set="heavy"):
    """Binary A x B matrix: 1 where residue atoms come within ``threshold`` Å.

    ``atom_set`` is ``"heavy"`` (minimum heavy-atom distance, Cα substituted
    for residues without recorded heavy atoms) or ``"ca"``.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if atom_set not in ("heavy", "ca"):
        raise ValueError(f"atom_set must be 'heavy' or 'ca', got {atom_set!r}")
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both chains must be non-empty")
    xa, owner_a = _residue_atoms(a, atom_set)
    xb, owner_b = _residue_atoms(b, atom_set)
    d = cdist(xa, xb)
    starts_a = np.flatnonzero(np.r_[True, owner_a[1:] != owner_a[:-1]])
    starts_b = np.flatnonzero(np.r_[True, owner_b[1:] != owner_b[:-1]])
    per_res = np.minimum.reduceat(np.minimum.reduceat(d, starts_a, axis=0), starts_b, axis=1)
    return (per_res <= threshold).astype(np.int8)


def virtual_cbeta(n, ca, c, bond_length=CB_BOND_LENGTH):
    """Ideal tetrahedral Cβ position (L-configuration) from backbone N, Cα, C."""
    n, ca, c = (np.asarray(v, dtype=np.float64) for v in (n, ca, c))
    to_n = n - ca
    to_c = c - ca
    ln, lc = np.linalg.norm(to_n), np.linalg.norm(to_c)
    if ln < 1e-8 or lc < 1e-8:
        raise DegenerateGeometryError("coincident backbone atoms")
    to_n, to_c = to_n / ln, to_c / lc
    normal = np.cross(to_n, to_c)
    nn = np.linalg.norm(normal)
    bisector = to_n + to_c
    nb = np.linalg.norm(bisector)
    if nn < 1e-8 or nb < 1e-8:
        raise DegenerateGeometryError("collinear backbone atoms")
    direction = -np.cos(_TETRA_HALF) * bisector / nb + np.sin(_TETRA_HALF) * normal / nn
    return ca + bond_length * direction
