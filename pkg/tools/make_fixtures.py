"""Regenerate the derived fixture variants from the hand-written ones.

For every ``<name>/xa-O2.sevm`` and ``<name>/xa-alt.sevm`` under the fixture
root this writes ``xa-O0`` (argument spills), ``ab-O2`` and ``ab-alt``
(register renaming into the AB dialect).

    python tools/make_fixtures.py [fixture_root]
"""

import sys
from pathlib import Path

from semid.asm import assemble, disassemble
from semid.corpus import fixtures_path, spill_variant, to_dialect

HEADER = "; generated by tools/make_fixtures.py from {src} -- do not edit\n"


def main(root: Path) -> None:
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        o2 = assemble((d / "xa-O2.sevm").read_text())
        alt = assemble((d / "xa-alt.sevm").read_text())
        outputs = {
            "xa-O0": ("xa-O2.sevm", spill_variant(o2)),
            "ab-O2": ("xa-O2.sevm", to_dialect(o2, "ab")),
            "ab-alt": ("xa-alt.sevm", to_dialect(alt, "ab")),
        }
        for variant, (src, image) in outputs.items():
            (d / f"{variant}.sevm").write_text(HEADER.format(src=src) + disassemble(image))


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else fixtures_path())
