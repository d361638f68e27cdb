#!/usr/bin/env python3
"""Generate the bundled sample corpora under crates/core/data/.

Output is fully determined by the seed below; rerunning rewrites identical
files.

    python3 scripts/gen_corpus.py
"""

import random
from pathlib import Path

SEED = 20240607
DATA = Path(__file__).resolve().parent.parent / "crates" / "core" / "data"

HALOGENS = ["F", "Cl", "Br"]


def random_alkyl(rng, max_carbons=6, allow_alkene=True, allow_halogen=True, allow_ring=True):
    """SMILES of an alkyl group written root-first."""
    if allow_ring and rng.random() < 0.12:
        size = rng.choice([3, 4, 5, 6])
        ring = "C9" + "C" * (size - 2) + "C9"
        if rng.random() < 0.3:
            ring = "C9" + "C" * (size - 3) + "C(C)C9"
        return ring
    n = rng.randint(1, max_carbons)
    children = {0: []}
    for k in range(1, n):
        candidates = [i for i in children if len(children[i]) < 2]
        parent = rng.choice(candidates)
        children[parent].append(k)
        children[k] = []
    decorations = {}
    leaves = [i for i in children if not children[i]]
    if allow_halogen and rng.random() < 0.2:
        target = rng.choice(list(children))
        if len(children[target]) < 2:
            decorations[target] = "(" + rng.choice(HALOGENS) + ")"
    if allow_alkene and n >= 2 and rng.random() < 0.15:
        leaf = rng.choice([leaf for leaf in leaves if leaf != 0] or [None])
        if leaf is not None and leaf not in decorations:
            decorations[leaf] = "=C"

    def write(i):
        d = decorations.get(i, "")
        s = "C" + (d if d.startswith("(") else "")
        kids = children[i]
        for c in kids[:-1]:
            s += "(" + write(c) + ")"
        if kids:
            s += write(kids[-1])
        elif d == "=C":
            s += d
        return s

    return write(0)


def family_members(rng):
    """Yield (family, smiles) forever."""
    r = random_alkyl
    builders = {
        "carboxyl": lambda: "OC(=O)" + r(rng, 8),
        "ester": lambda: "O=C(" + r(rng) + ")O" + r(rng, 5),
        "amide": lambda: rng.choice(
            [
                lambda: "NC(=O)" + r(rng, 8),
                lambda: "N(" + r(rng, 3, False, False, False) + ")C(=O)" + r(rng),
            ]
        )(),
        "ketone": lambda: "O=C(" + r(rng, 5) + ")" + r(rng, 5),
        "hydroxyl": lambda: "O" + r(rng, 8, allow_alkene=False),
        "ether": lambda: "O(" + r(rng, 4, allow_alkene=False) + ")" + r(rng, 5, allow_alkene=False),
        "primary_amine": lambda: "N" + r(rng, 8, allow_alkene=False),
        "tertiary_amine": lambda: "N("
        + r(rng, 3, False, False, False)
        + ")("
        + r(rng, 3, False, False, False)
        + ")"
        + r(rng, 5, allow_alkene=False),
        "benzene_ring": lambda: rng.choice(
            [
                lambda: "c1ccccc1" + r(rng, 7, allow_ring=False),
                lambda: "c1ccc(" + r(rng, 4, allow_ring=False) + ")cc1" + r(rng, 4, allow_ring=False),
                lambda: "c1cc(" + r(rng, 4, allow_ring=False) + ")ccc1" + rng.choice(HALOGENS),
            ]
        )(),
        "nitrile": lambda: "N#C" + r(rng, 8, allow_alkene=False),
    }
    weights = {
        "carboxyl": 260,
        "ester": 300,
        "amide": 260,
        "ketone": 260,
        "hydroxyl": 220,
        "ether": 200,
        "primary_amine": 120,
        "tertiary_amine": 140,
        "benzene_ring": 160,
        "nitrile": 80,
    }
    return builders, weights


def training_corpus(rng):
    builders, weights = family_members(rng)
    seen = set()
    rows = []
    for family, count in weights.items():
        made, attempts = 0, 0
        while made < count and attempts < count * 200:
            attempts += 1
            smi = builders[family]()
            if smi in seen:
                continue
            seen.add(smi)
            rows.append((smi, family))
            made += 1
    rng.shuffle(rows)
    return rows


SMALL = [
    "CC(=O)O", "CCOC(C)=O", "CC(N)=O", "CC(C)=O", "CCC=O", "CCO", "CCOCC", "CCN",
    "CNC", "CN(C)C", "Oc1ccccc1", "Nc1ccccc1", "Cc1ccccc1", "c1ccncc1", "CS(C)(=O)=O",
    "CC(=O)OC(C)=O", "COC(N)=O", "c1ccoc1", "c1ccsc1", "c1cc[nH]c1", "NS(=O)(=O)c1ccccc1",
    "CS(=O)(=O)O", "NC(N)=O", "C[N+](=O)[O-]", "CC(=O)Cl", "CC#N", "CC=NC", "CN=NC",
    "CSC", "CS", "CSSC", "C=CC", "C#CC", "CF", "CCl", "CBr", "CI", "OCCO",
    "CC(=O)CC(=O)O", "NCCC(=O)O", "OC(=O)c1ccccc1", "CCOC(=O)c1ccccc1", "COc1ccccc1",
    "O=Cc1ccco1", "CC(C)(C)N", "ClCC#N", "FC(F)(F)C(=O)O", "C1CCCCC1", "[Na+].[Cl-]", "C",
]

PARSE_EXTRAS = [
    "[H]O[H]", "[2H]C([2H])([2H])O", "[13CH4]", "C[C@H](N)C(=O)O", "C[C@@H](O)CC",
    "F/C=C/F", "F/C=C\\F", "C1CC2CCC1C2", "C%10CCCCC%10", "C1CCCCC1.C1CCCCC1",
    "[NH4+].[Cl-]", "[O-]C(=O)C", "C[N+](C)(C)C", "c1ccc2ccccc2c1", "c1ccc2[nH]ccc2c1",
    "O=C1CCCCC1", "N1CCOCC1", "C1=CC=CC=C1", "[Fe+2]", "[Cu]", "OS(=O)(=O)O",
    "P(=O)(O)(O)O", "B(O)(O)O", "C(C(C(C(C)C)C)C)C", "CC(C)(C)C(C)(C)C", "C#N",
    "[C-]#[O+]", "[CH3][CH2][OH]", "c1ccccc1-c1ccccc1", "C=1CCCCC=1", "C1CCCC1.C",
    "CC.CC.CC", "[Si](C)(C)(C)C", "[Se]", "I[I]", "[NH3+]CC([O-])=O", "[2H]O",
    "O=[N+]([O-])c1ccccc1", "CC(=O)Nc1ccc(O)cc1", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
]


def parse_corpus(rng, pool):
    picked = rng.sample(pool, 200 - len(PARSE_EXTRAS))
    rows = list(PARSE_EXTRAS) + picked
    rng.shuffle(rows)
    return rows


ISOMERS = [
    ("CCCCC(=O)O", "CCCC(=O)OC"),
    ("CCCCC=O", "CCCC(=O)C"),
    ("CCCCCO", "CCCOCC"),
    ("OCc1ccccc1", "COc1ccccc1"),
    ("CCCCN", "CCN(C)C"),
]


def main():
    rng = random.Random(SEED)
    rows = training_corpus(rng)
    header = (
        "# Synthetic desk-scale corpus: SMILES<TAB>contains_carboxylic_acid (0/1).\n"
        "# Generated by scripts/gen_corpus.py; families are acids, esters, amides,\n"
        "# ketones, alcohols, ethers, amines, alkylbenzenes and nitriles.\n"
    )
    with open(DATA / "desk_corpus.smi", "w") as f:
        f.write(header)
        for smi, family in rows:
            f.write(f"{smi}\t{1 if family == 'carboxyl' else 0}\n")
    with open(DATA / "small_molecules.smi", "w") as f:
        f.write("# Fifty molecules of at most twelve heavy atoms covering the dictionary.\n")
        for smi in SMALL:
            f.write(smi + "\n")
    with open(DATA / "parse_corpus.smi", "w") as f:
        f.write("# Two hundred molecules exercising the supported SMILES syntax.\n")
        for smi in parse_corpus(rng, [s for s, _ in rows]):
            f.write(smi + "\n")
    with open(DATA / "isomer_pairs.tsv", "w") as f:
        f.write("# Same molecular formula, different functional group.\n")
        for a, b in ISOMERS:
            f.write(f"{a}\t{b}\n")
    print(f"wrote {len(rows)} training molecules")


if __name__ == "__main__":
    main()
