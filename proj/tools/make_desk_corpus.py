#!/usr/bin/env python3
"""Builds data/desk/ from public-domain texts shipped in package registries:
@stdlib/datasets-sotu and @stdlib/datasets-moby-dick (npm) and the
shakespeare 0.6 sdist (PyPI), which also carries Milton.

    mkdir /tmp/desk && cd /tmp/desk
    npm pack @stdlib/datasets-sotu @stdlib/datasets-moby-dick
    pip download --no-deps --no-binary :all: shakespeare==0.6 -d .
    for f in *.tgz; do tar xzf "$f" --one-top-level="${f%.tgz}"; done
    tar xzf shakespeare-0.6.tar.gz
    python3 tools/make_desk_corpus.py /tmp/desk data/desk
"""
import glob
import os
import re
import sys

PLAYS = [
    "hamlet", "macbeth", "lear", "othello", "julius_caesar", "tempest",
    "twelfth_night", "midsummer_nights_dream", "merchant_of_venice", "as_you_like_it",
]

MILTON = ["paradise_lost_(no_introduction)", "paradise_regained", "areopagitica"]

LINE_NUMBER = re.compile(r"\s{2,}\d+\s*$")
SPEECH_PREFIX = re.compile(r"^[A-Z][a-z]{1,5}:\s+")


def milton_poems(path):
    """The minor poems and Samson Agonistes from the Poetical Works, without
    the editor's preface, collation notes, transcriber notes, title-page
    rules, margin line numbers and speech prefixes."""
    lines = open(path, encoding="utf-8").read().splitlines()
    start = next(i for i, l in enumerate(lines) if l.startswith("Transcriber's note"))
    kept = []
    blanks = 0
    skipping = False
    for line in lines[start:]:
        t = line.strip()
        blanks = blanks + 1 if not t else 0
        if t.startswith(("Note:", "Notes:", "Transcriber's")):
            skipping = True
        elif skipping and blanks >= 2:
            skipping = False
        if skipping or set(t) <= {"-"}:
            kept.append("")
            continue
        kept.append(SPEECH_PREFIX.sub("", LINE_NUMBER.sub("", t)))
    return "\n".join(kept)

SPEAKER = re.compile(r"^[A-Z][A-Za-z' ]{0,24}\.$")
STAGE = re.compile(r"\[[^\]]*\]", re.S)
HEADING = re.compile(r"^(ACT|SCENE)\b", re.I)


def play_text(path):
    """Dialogue only: cast list, act/scene headings, speaker tags and stage
    directions are dropped."""
    text = STAGE.sub(" ", open(path, encoding="utf-8").read())
    lines = text.splitlines()
    start = next(i for i, l in enumerate(lines) if HEADING.match(l.strip()))
    kept = []
    previous = ""
    for line in lines[start:]:
        t = line.strip()
        # a speaker tag opens a speech, so it always follows a blank line
        if t and not HEADING.match(t) and not (not previous and SPEAKER.match(t)):
            kept.append(t)
        elif kept and kept[-1]:
            kept.append("")
        previous = t
    return "\n".join(kept)


PRESIDENTS = {
    "roosevelt_t": "theodore_roosevelt",
    "truman": "harry_s_truman",
    "clinton": "william_j_clinton",
    "cleveland": "grover_cleveland",
    "obama": "barack_obama",
    "eisenhower": "dwight_d_eisenhower",
}


def main(src, dst):
    os.makedirs(dst, exist_ok=True)
    sotu = glob.glob(os.path.join(src, "stdlib-datasets-sotu-*", "package", "data"))[0]
    for author, key in PRESIDENTS.items():
        files = sorted(glob.glob(os.path.join(sotu, f"*_{key}_*.txt")))
        texts = [open(f, encoding="utf-8").read().strip() for f in files]
        with open(os.path.join(dst, f"{author}.txt"), "w", encoding="utf-8") as out:
            out.write("\n\n".join(texts) + "\n")
        if author == "cleveland":
            # two non-consecutive terms: 1885-1888 and 1893-1896
            for term, years in (("cleveland_1", range(1885, 1889)), ("cleveland_2", range(1893, 1897))):
                part = [open(f, encoding="utf-8").read().strip() for f in files
                        if int(os.path.basename(f)[:4]) in years]
                with open(os.path.join(dst, f"{term}.txt"), "w", encoding="utf-8") as out:
                    out.write("\n\n".join(part) + "\n")

    moby = glob.glob(os.path.join(src, "stdlib-datasets-moby-dick-*", "package", "data"))[0]
    chapters = sorted(glob.glob(os.path.join(moby, "chapter_*.txt")),
                      key=lambda p: int(re.search(r"chapter_(\d+)", p).group(1)))
    with open(os.path.join(dst, "melville.txt"), "w", encoding="utf-8") as out:
        out.write("\n\n".join(open(c, encoding="utf-8").read().strip() for c in chapters) + "\n")

    okfn = glob.glob(os.path.join(src, "shakespeare-*"))[0]
    plays = [play_text(os.path.join(okfn, "shksprdata", "texts", f"{p}_gut.txt")) for p in PLAYS]
    with open(os.path.join(dst, "shakespeare.txt"), "w", encoding="utf-8") as out:
        out.write("\n\n".join(plays) + "\n")
    milton = os.path.join(okfn, "miltondata", "texts")
    works = [open(os.path.join(milton, f"{w}_gut.txt"), encoding="utf-8").read().strip() for w in MILTON]
    works = ["\n".join(LINE_NUMBER.sub("", l) for l in w.splitlines()) for w in works]
    works.append(milton_poems(os.path.join(milton, "poetical_works_gut.txt")))
    with open(os.path.join(dst, "milton.txt"), "w", encoding="utf-8") as out:
        out.write("\n\n".join(works) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
