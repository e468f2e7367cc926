#!/usr/bin/env python3
"""Example objective worker: J(d) = sum of (i + 1) over active bits i.

Line protocol, one message per line, bit 0 first in the bitstring:

    parent -> worker:  HELLO <N>            (once, at startup)
    worker -> parent:  READY
    parent -> worker:  EVAL <N> <bitstring> (repeated)
    worker -> parent:  VAL <decimal real>
    parent -> worker:  BYE                  (then the worker exits)

Under an equality constraint of z active bits the maximum is attained by
activating the z highest indices.
"""

import sys


def main() -> None:
    hello = sys.stdin.readline().split()
    assert hello[0] == "HELLO", hello
    n = int(hello[1])
    sys.stdout.write("READY\n")
    sys.stdout.flush()
    for line in sys.stdin:
        parts = line.split()
        if parts[0] == "BYE":
            return
        assert parts[0] == "EVAL" and int(parts[1]) == n, parts
        bits = parts[2]
        value = sum(i + 1 for i, b in enumerate(bits) if b == "1")
        sys.stdout.write(f"VAL {value}\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
