"""Regenerate the stored counterexample fixtures under src/selfpred/oracle/fixtures."""

import os
import sys

from selfpred.oracle.fixtures import dumps_fixture, zp_without_rec
from selfpred.oracle.theory import find_op_without_multistep_op


def main() -> int:
    out = os.path.join(os.path.dirname(__file__), "..", "src", "selfpred", "oracle", "fixtures")
    pomdp, encoder, _ = find_op_without_multistep_op(seed=0)
    with open(os.path.join(out, "op_without_2step_op.txt"), "w") as fh:
        fh.write(dumps_fixture(pomdp, encoder))
    pomdp, encoder = zp_without_rec()
    with open(os.path.join(out, "zp_without_rec.txt"), "w") as fh:
        fh.write(dumps_fixture(pomdp, encoder))
    return 0


if __name__ == "__main__":
    sys.exit(main())
