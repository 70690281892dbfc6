"""Reference values checked by the pipelines, kept in one place for auditing."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .qfield import QField


@dataclass(frozen=True)
class Reference:
    value: object  # QField when exact, float otherwise
    tolerance: float
    provenance: str

    def __float__(self) -> float:
        return float(self.value)


REFERENCES = {
    # CHSH + 2<B C> over all local deterministic extended-Bell strategies
    "classical_monogamy_bound": Reference(QField(4), 0.0, "brute force over 256 deterministic boxes"),
    # CHSH + 2<B C> at the two-layer Tsirelson protocol (C copies B)
    "two_layer_value": Reference(QField(2, 2), 0.0, "exact evaluation of compose_2layer(tsirelson)"),
    # quantum maximum of CHSH
    "tsirelson": Reference(QField(0, 2), 1e-5, "NPA level 1 on the Bell scenario"),
    # upper bound with an AC intermediate; also the qubit optimum of CHSH + 2<A0 B0>
    "ac_sdp_bound": Reference(8 / math.sqrt(3), 1e-3, "moment-matrix bound for ext_bell_ac"),
    # CHSH + 2<B C> at the PR box with C copying B
    "opt_copy_value": Reference(QField(6), 0.0, "exact evaluation of opt_copy_box"),
}


def reference(name: str) -> Reference:
    return REFERENCES[name]
