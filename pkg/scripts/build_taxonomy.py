"""Regenerate the bundled taxonomy files under src/obfkit/data/.

Root names and per-root subcategory counts are the real ones; the
subcategories themselves are placeholders except for one known path
under "People & Society".
"""
from pathlib import Path

ROOTS = [
    ("Arts & Entertainment", 147),
    ("News", 21),
    ("Games", 42),
    ("Law & Government", 36),
    ("Finance", 50),
    ("Computers & Electronics", 128),
    ("Internet & Telecom", 34),
    ("Sports", 69),
    ("Business & Industrial", 121),
    ("People & Society", 40),
    ("Science", 25),
    ("Shopping", 71),
    ("Travel", 27),
    ("Autos & Vehicles", 95),
    ("Food & Drink", 73),
    ("Beauty & Fitness", 21),
    ("Jobs & Education", 36),
    ("Reference", 30),
    ("Online Communities", 18),
    ("Pets & Animals", 15),
    ("Books & Literature", 9),
    ("Home & Garden", 48),
    ("Hobbies & Leisure", 30),
    ("Real Estate", 9),
]

KNOWN_PATHS = {
    "People & Society": [
        "Family & Relationships",
        "Family",
        "Parenting",
        "Babies & Toddlers",
        "Baby Care & Hygiene",
    ],
}

MAX_DEPTH = 6
LOCATION_ITEMS = 847


def subtree(root, count):
    """Yield (name, parent) pairs for `count` descendants of `root`."""
    depth = {root: 0}
    placed = []
    parent = root
    known = KNOWN_PATHS.get(root, [])
    for name in known:
        depth[name] = depth[parent] + 1
        yield name, parent
        parent = name
    first_level = max(1, round(count ** 0.5))
    i = 0
    while len(placed) + len(known) < count:
        name = f"{root}: Topic {i + 1:03d}"
        if i < first_level or not placed:
            parent = root
        else:
            parent = placed[(i - first_level) // 3]
            if depth[parent] >= MAX_DEPTH:
                parent = root
        depth[name] = depth[parent] + 1
        placed.append(name)
        i += 1
        yield name, parent


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "obfkit" / "data"
    lines = ["# id<TAB>name<TAB>parent_id; roots have an empty parent", ]
    for root, count in ROOTS:
        lines.append(f"{root}\t{root}\t")
        for name, parent in subtree(root, count):
            lines.append(f"{name}\t{name}\t{parent}")
    (out / "taxonomy_default.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    loc = ["# location interests; hidden from the settings page", "World Locations\tWorld Locations\t"]
    for name, parent in subtree("World Locations", LOCATION_ITEMS - 1):
        loc.append(f"{name}\t{name}\t{parent}")
    (out / "world_locations.tsv").write_text("\n".join(loc) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
