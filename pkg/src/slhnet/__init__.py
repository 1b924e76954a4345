"""slhnet: compose quantum input-output networks as (S, L, H) triples,
then derive and integrate their dynamics."""

from .hilbert import (
    LabeledSpace,
    Operator,
    commutator,
    create,
    destroy,
    identity,
    make_elementary,
    number,
    op_close,
    partial_trace,
    sigma_minus,
    sigma_plus,
    sigma_z,
)
from .slh import (
    PortMap,
    SLHTriple,
    concat,
    direct_couple,
    feedback,
    feedback_multi,
    identity_triple,
    pad,
    permute_ports,
    series,
    triple_from_json,
    triple_to_json,
    triples_close,
)

__version__ = "0.1.0"
