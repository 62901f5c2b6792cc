"""Build the small CJK font subsets vendored under src/scenechar/data/fonts.

The sources are OFL-licensed web fonts published on npm (Fontsource and
lxgw-wenkai-webfont). They ship as unicode-range sliced woff2 files; this
script finds the slices covering the requested characters, decompresses and
merges them, and subsets the result to those characters only.

    npm install @fontsource/noto-sans-sc @fontsource/noto-serif-sc ... lxgw-wenkai-webfont
    python scripts/build_font_subsets.py /path/to/node_modules src/scenechar/data/fonts
"""
import argparse
import re
import tempfile
from pathlib import Path

from fontTools import subset
from fontTools.merge import Merger
from fontTools.ttLib import TTFont

# (output name, css file relative to node_modules)
SOURCES = [
    ("noto-sans-sc-300", "@fontsource/noto-sans-sc/300.css"),
    ("noto-sans-sc-400", "@fontsource/noto-sans-sc/400.css"),
    ("noto-sans-sc-500", "@fontsource/noto-sans-sc/500.css"),
    ("noto-sans-sc-700", "@fontsource/noto-sans-sc/700.css"),
    ("noto-sans-sc-900", "@fontsource/noto-sans-sc/900.css"),
    ("noto-serif-sc-300", "@fontsource/noto-serif-sc/300.css"),
    ("noto-serif-sc-400", "@fontsource/noto-serif-sc/400.css"),
    ("noto-serif-sc-600", "@fontsource/noto-serif-sc/600.css"),
    ("noto-serif-sc-700", "@fontsource/noto-serif-sc/700.css"),
    ("noto-serif-sc-900", "@fontsource/noto-serif-sc/900.css"),
    ("ma-shan-zheng", "@fontsource/ma-shan-zheng/400.css"),
    ("zcool-kuaile", "@fontsource/zcool-kuaile/400.css"),
    ("zcool-qingke-huangyou", "@fontsource/zcool-qingke-huangyou/400.css"),
    ("zhi-mang-xing", "@fontsource/zhi-mang-xing/400.css"),
    ("long-cang", "@fontsource/long-cang/400.css"),
    ("lxgw-wenkai-regular", "lxgw-wenkai-webfont/lxgwwenkai-regular.css"),
    ("lxgw-wenkai-bold", "lxgw-wenkai-webfont/lxgwwenkai-bold.css"),
]

FACE_RE = re.compile(r"src: url\('?\./(files/[^')]+?\.woff2)'?\).*?unicode-range: ([^;}]+)", re.S)


def parse_slices(css_path):
    out = []
    for m in FACE_RE.finditer(css_path.read_text()):
        ranges = []
        for part in m.group(2).split(","):
            a, _, b = part.strip()[2:].partition("-")
            ranges.append((int(a, 16), int(b or a, 16)))
        out.append((css_path.parent / m.group(1), ranges))
    return out


def build(node_modules, css_rel, chars, out_path):
    css_path = node_modules / css_rel
    wanted = {ord(c) for c in chars}
    files = []
    for path, ranges in parse_slices(css_path):
        if any(a <= cp <= b for cp in wanted for a, b in ranges):
            files.append(path)
    if not files:
        raise SystemExit(f"{css_rel}: no slice covers the requested characters")
    with tempfile.TemporaryDirectory() as tmp:
        ttfs = []
        for i, path in enumerate(files):
            font = TTFont(path)
            font.flavor = None
            for tag in ("GSUB", "GPOS", "GDEF", "BASE", "vhea", "vmtx"):
                if tag in font:
                    del font[tag]
            p = Path(tmp, f"{i}.ttf")
            font.save(p)
            ttfs.append(str(p))
        merged = Merger().merge(ttfs) if len(ttfs) > 1 else TTFont(ttfs[0])
        options = subset.Options()
        options.hinting = False
        options.layout_features = []
        options.name_IDs = ["*"]
        sub = subset.Subsetter(options)
        sub.populate(unicodes=sorted(wanted))
        sub.subset(merged)
        merged.save(out_path)
    missing = wanted - set(TTFont(out_path).getBestCmap())
    return missing


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("node_modules", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--chars-file", type=Path,
                    default=Path(__file__).resolve().parent.parent / "src/scenechar/data/charset.txt")
    args = ap.parse_args()
    chars = "".join(args.chars_file.read_text(encoding="utf-8").split())
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, css in SOURCES:
        out = args.out_dir / f"{name}.ttf"
        missing = build(args.node_modules, css, chars, out)
        note = f" missing {''.join(chr(c) for c in sorted(missing))}" if missing else ""
        print(f"{out.name}: {out.stat().st_size} bytes{note}")


if __name__ == "__main__":
    main()
