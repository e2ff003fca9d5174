"""Line-protocol classifier that answers every request with the contents of
its model file (``label<TAB>score`` lines). Used by tests and demos.

    python -m taxoforge.tools.echo_classifier answers.tsv
"""

import sys


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    with open(argv[0], encoding="utf-8") as fh:
        reply = [line.rstrip("\r\n") for line in fh if line.strip()]
    for _ in sys.stdin:
        for line in reply:
            sys.stdout.write(line + "\n")
        sys.stdout.write("\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
