#!/usr/bin/env python3
"""Count question lines in bAbI task files without parsing stories.

A question line is the only kind of line that contains a tab, so the count
is the number of lines with at least one tab character.

    python3 scripts/count_babi_questions.py data/tasks_1-20_v1-2/en-10k/*_train.txt
"""

import sys


def count(path):
    with open(path, encoding="utf-8") as f:
        return sum(1 for line in f if "\t" in line)


def main(paths):
    if not paths:
        print(__doc__.strip(), file=sys.stderr)
        return 1
    total = 0
    for path in paths:
        n = count(path)
        total += n
        print(f"{n}\t{path}")
    print(f"{total}\ttotal")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
