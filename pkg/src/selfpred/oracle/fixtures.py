"""Stored counterexample instances: a POMDP and an encoder per file.

File layout: the POMDP text, a line ``---``, then the encoder text.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..envs.pomdp import FinitePOMDP, dumps, loads
from .encoders import TabularEncoder
from .report import dumps_encoder, loads_encoder
from .tree import HistoryTree, enumerate_histories

FIXTURES = ("op_without_2step_op", "zp_without_rec")
SEPARATOR = "---"


def dumps_fixture(pomdp: FinitePOMDP, encoder: TabularEncoder) -> str:
    return dumps(pomdp).rstrip("\n") + f"\n{SEPARATOR}\n" + dumps_encoder(encoder)


def loads_fixture(text: str) -> tuple[FinitePOMDP, TabularEncoder]:
    head, sep, tail = text.partition(f"\n{SEPARATOR}\n")
    if not sep:
        raise ValueError("fixture text lacks the --- separator")
    return loads(head + "\n"), loads_encoder(tail)


def load_fixture(name: str) -> tuple[FinitePOMDP, TabularEncoder, HistoryTree]:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; expected one of {FIXTURES}")
    text = resources.files(__package__).joinpath("fixtures", f"{name}.txt").read_text()
    pomdp, encoder = loads_fixture(text)
    tree = enumerate_histories(pomdp)
    encoder.check_tree(tree)
    return pomdp, encoder, tree


def zp_without_rec() -> tuple[FinitePOMDP, TabularEncoder]:
    """Two first observations p, q share a latent; each is followed by x or y
    with probability 1/2. The encoder swaps the labels of x and y after q, so
    the next-latent law given (z, a) is the same (ZP) while o' no longer
    determines z' (Rec fails)."""
    # states: p, q, x, y; observation = state
    trans = np.zeros((4, 1, 4))
    trans[0, 0, 2:] = trans[1, 0, 2:] = 0.5
    trans[2, 0, 2] = trans[3, 0, 3] = 1.0
    pomdp = FinitePOMDP(trans, np.eye(4), np.array([[0.0], [0.0], [0.0], [1.0]]),
                        np.array([0.5, 0.5, 0.0, 0.0]), 0.9, 2, name="zp-without-rec")
    tree = enumerate_histories(pomdp)
    depth1 = []
    for i in range(tree.layers[1].size):
        first, _, second = tree.path(1, i)
        swapped = first == 1
        depth1.append(int((second == 3) != swapped))
    return pomdp, TabularEncoder(([0] * tree.layers[0].size, depth1))
