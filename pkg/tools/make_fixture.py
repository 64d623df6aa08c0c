"""Regenerate the bundled fixture dimer (src/geocontact/data/)."""

import os

import numpy as np

from geocontact import synthetic
from geocontact.structio import derive_contact_labels

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "src", "geocontact", "data")


def main():
    chain_a, chain_b, _ = synthetic.synthetic_complex(24, 20, seed=7, min_contacts=15)
    # residue 5 of chain B becomes a glycine
    gly = chain_b.residues[4]
    gly.heavy_atoms = np.array([a for a in gly.heavy_atoms if not np.allclose(a, gly.cb)])
    gly.cb = None
    gly.name = "GLY"
    text = synthetic.format_pdb([chain_a, chain_b])
    header = "REMARK   1 SYNTHETIC DIMER BUILT FROM IDEAL INTERNAL COORDINATES\n"
    with open(os.path.join(OUT, "fixture_dimer.pdb"), "w") as fh:
        fh.write(header + text)
    rng = np.random.default_rng(7)
    np.savetxt(os.path.join(OUT, "fixture_features_A.csv"), rng.normal(size=(24, 10)), delimiter=",", fmt="%.6f")
    np.savetxt(os.path.join(OUT, "fixture_features_B.csv"), rng.normal(size=(20, 10)), delimiter=",", fmt="%.6f")
    labels = derive_contact_labels(chain_a, chain_b)
    print("contacts:", int(labels.sum()))


if __name__ == "__main__":
    main()
