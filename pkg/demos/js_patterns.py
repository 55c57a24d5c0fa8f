"""Classify every JavaScript fixture and group them into clones."""

from pathlib import Path

from hybridlens.js import classify_patterns, group_clones, tokenize_js

JS = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "js"
BRIDGES = {"SynchJS", "HTMLOUT"}


def main():
    items = []
    for path in sorted(JS.glob("*.js")):
        snip = tokenize_js(path.read_text(encoding="utf-8"))
        items.append(("fixtures", path.name, snip))
        found = ", ".join(h.pattern.value for h in classify_patterns(snip, BRIDGES)) or "-"
        print(f"{path.name:28} {snip.clone_key}  {found}")
    print()
    for g in group_clones(items):
        if len(g.members) > 1:
            print(f"clone group {g.clone_key}: {', '.join(site for _, site in g.members)}")


if __name__ == "__main__":
    main()
