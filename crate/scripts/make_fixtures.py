"""Regenerate the bundled fixture tables.

Produces
  data/osc_surrogate_350.csv             350 oligomer-like SMILES with synthetic targets
  data/overfit_32.csv                    the first 32 of those with unrelated random targets
  crates/core/tests/data/smiles_counts.csv  reference heavy-atom / bond counts (RDKit)

Run once, offline:  python3 scripts/make_fixtures.py
The outputs are committed; the Rust test suite never calls RDKit.
"""

import csv
import random
from pathlib import Path

from rdkit import Chem
from rdkit.Chem import rdMolDescriptors

ROOT = Path(__file__).resolve().parent.parent

UNITS = [
    "[*:1]c1ccc([*:2])s1",
    "[*:1]c1sc([*:2])cc1CCCCCC",
    "[*:1]c1ccc([*:2])cc1",
    "[*:1]c1ccc([*:2])[se]1",
    "[*:1]c1ccc([*:2])o1",
    "[*:1]c1cc2sc([*:2])cc2s1",
    "[*:1]c1ccc([*:2])c2nsnc12",
    "[*:1]c1ccc2c(c1)C(C)(C)c1cc([*:2])ccc1-2",
    "[*:1]c1ccc2c(c1)c1cc([*:2])ccc1n2C",
    "[*:1]c1cc2[Si](C)(C)c3cc([*:2])sc3-c2s1",
    "[*:1]c1ccc2cc([*:2])ccc2c1",
    "[*:1]c1ccc([*:2])nc1",
    "[*:1]c1cc2cc3cc([*:2])sc3cc2s1",
    "[*:1]c1ncc([*:2])s1",
    "O=C1C2=C([*:1])N(C)C(=O)C2=C([*:2])N1C",
    "[*:1]c1c2ccccc2c([*:2])c2ccccc12",
    "[*:1]c1cc2c(s1)-c1sc([*:2])cc1C2(C)C",
    "c1ccc2c(c1)-c1ccccc1C21c2cc([*:1])ccc2-c2ccc([*:2])cc21",
    "[*:1]c1ccc([*:2])[nH]1",
    "[*:1]C1CCC([*:2])CC1",
]
# heavy units are drawn less often to keep the average size near the target
UNIT_WEIGHTS = [6, 4, 5, 2, 2, 3, 3, 1, 1, 1, 2, 2, 1, 2, 1, 1, 1, 0.4, 1, 1]
LINKERS = ["", "", "", "C=C", "C#C", "C"]
CAPS = ["[H]", "[H]", "C", "CCCC", "C#N", "OC", "F", "CC(C)C"]

DRUGS = [
    "CC(=O)Oc1ccccc1C(=O)O",
    "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "CC(=O)Nc1ccc(O)cc1",
    "c1ccc2ccccc2c1",
    "c1ccc(cc1)-c1ccccc1",
    "C1CCCCC1",
    "C1CC2CCC1C2",
    "C1CCC2(CC1)CCCC2",
    "C12C3C4C1C5C2C3C45",
    "OC(=O)CCc1ccccc1",
    "CN1CCC[C@H]1c1cccnc1",
    "COc1ccc2[nH]cc(CCNC(C)=O)c2c1",
    "CC1=C(C(=O)OC)C(c2ccccc2[N+](=O)[O-])C(C(=O)OC)=C(C)N1",
    "O=C(O)c1ccccc1O",
    "Clc1ccc(cc1)C(c1ccc(Cl)cc1)C(Cl)(Cl)Cl",
    "CC(C)(C)NCC(O)c1ccc(O)c(CO)c1",
    "NC(=O)c1cccnc1",
    "c1ccc2c(c1)ccc1ccccc12",
    "c1ccc2cc3ccccc3cc2c1",
    "c1cc2ccc3cccc4ccc(c1)c2c34",
    "C1=CC=CC=C1",
    "OC1C(O)C(O)C(O)C(O)C1O",
    "CCOC(=O)C1=C(C)NC(C)=C(C(=O)OCC)C1c1ccccc1",
    "CS(=O)(=O)c1ccc(cc1)C1=C(C(=O)OC1)c1ccccc1",
    "FC(F)(F)c1ccc(Oc2ccccc2)cc1",
    "Brc1ccc(I)cc1",
    "c1ccc2c(c1)[nH]c1ccccc12",
    "c1ccc2c(c1)oc1ccccc12",
    "c1ccc2c(c1)sc1ccccc12",
    "c1csc(c1)-c1cccs1",
    "c1csc(c1)-c1ccc(s1)-c1ccc(s1)-c1cccs1",
    "c1ccc2cc3cc4cc5cc6ccccc6cc5cc4cc3cc2c1",
    "C1CC11CC1",
    "C1CC2(C1)CC2",
    "B(O)(O)c1ccccc1",
    "C[Si](C)(C)c1ccccc1",
    "C[Sn](C)(C)c1cccs1",
    "C[Ge](C)(C)C",
    "c1cc[te]c1",
    "c1cc[se]c1",
    "O=S(=O)(O)c1ccccc1",
    "P(c1ccccc1)(c1ccccc1)c1ccccc1",
    "O=P(O)(O)O",
    "C1CCC%10CCCCC%10C1",
    "C#CC#N",
    "N#Cc1ccccc1C#N",
    "OC(=O)C(F)(F)F",
    "C1CCOC1",
    "C1COCCO1",
    "c1ccncc1",
    "c1cnccn1",
    "c1ncncn1",
    "c1ccoc1",
    "c1cc[nH]c1",
    "c1cnc[nH]1",
    "Cc1ccc(C)cc1",
    "CC(C)(C)c1ccc(O)cc1",
    "CCCCCCCCCCCCCCCC(=O)O",
    "NCCc1ccc(O)c(O)c1",
]


def zip_chain(rng):
    n = rng.randint(2, 5)
    picks = rng.choices(range(len(UNITS)), weights=UNIT_WEIGHTS, k=n)
    parts = []
    label = 10
    left = label
    parts.append(f"[*:{left}]{rng.choice(CAPS)}")
    for i, u in enumerate(picks):
        right = label + 1
        frag = UNITS[u].replace("[*:1]", f"[*:{left}]").replace("[*:2]", f"[*:{right}]")
        parts.append(frag)
        if i + 1 < len(picks):
            linker = rng.choice(LINKERS)
            if linker:
                nxt = right + 1
                parts.append(f"[*:{right}]{linker}[*:{nxt}]")
                right = nxt
        left = right
        label = right + 1
    parts.append(f"[*:{left}]{rng.choice(CAPS)}")
    mol = Chem.MolFromSmiles(".".join(parts), sanitize=False)
    mol = Chem.molzip(mol)
    mol = Chem.RemoveHs(mol)
    Chem.SanitizeMol(mol)
    return mol


def synthetic_targets(mol, rng):
    ri = mol.GetRingInfo()
    arom_rings = sum(1 for r in ri.AtomRings() if all(mol.GetAtomWithIdx(a).GetIsAromatic() for a in r))
    n_s = sum(1 for a in mol.GetAtoms() if a.GetSymbol() in ("S", "Se"))
    n_n = sum(1 for a in mol.GetAtoms() if a.GetSymbol() == "N")
    rot = rdMolDescriptors.CalcNumRotatableBonds(mol)
    fsp3 = rdMolDescriptors.CalcFractionCSP3(mol)
    pce = 1.2 + 0.45 * arom_rings + 0.3 * n_s - 0.05 * rot - 2.0 * fsp3 + rng.gauss(0, 0.15)
    homo = -5.6 + 0.06 * arom_rings + 0.05 * n_s - 0.04 * n_n + rng.gauss(0, 0.03)
    lumo = -3.0 - 0.05 * arom_rings - 0.08 * n_n + 0.2 * fsp3 + rng.gauss(0, 0.03)
    return max(pce, 0.0), homo, lumo


def main():
    rng = random.Random(20240611)
    seen = set()
    rows = []
    while len(rows) < 350:
        mol = zip_chain(rng)
        smi = Chem.MolToSmiles(mol, isomericSmiles=False)
        if smi in seen or "." in smi:
            continue
        seen.add(smi)
        pce, homo, lumo = synthetic_targets(Chem.MolFromSmiles(smi), rng)
        rows.append((smi, round(pce, 4), round(homo, 4), round(lumo, 4)))

    with open(ROOT / "data" / "osc_surrogate_350.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["smiles", "pce", "homo", "lumo"])
        w.writerows(rows)

    # capacity fixture: the first 32 molecules with unrelated random targets
    noise = random.Random(32)
    with open(ROOT / "data" / "overfit_32.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["smiles", "y"])
        w.writerows((r[0], f"{noise.uniform(-1, 1):.4f}") for r in rows[:32])

    counts = []
    for smi in DRUGS + [r[0] for r in rows[:80]]:
        m = Chem.MolFromSmiles(smi)
        assert m is not None, smi
        counts.append((smi, m.GetNumAtoms(), m.GetNumBonds()))
    out = ROOT / "crates" / "core" / "tests" / "data"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "smiles_counts.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["smiles", "atoms", "bonds"])
        w.writerows(counts)

    atoms = [Chem.MolFromSmiles(r[0]).GetNumAtoms() for r in rows]
    rings = [rdMolDescriptors.CalcNumRings(Chem.MolFromSmiles(r[0])) for r in rows]
    print("surrogate: avg atoms %.1f, avg rings %.1f" % (sum(atoms) / len(atoms), sum(rings) / len(rings)))
    print("reference counts:", len(counts))


if __name__ == "__main__":
    main()
