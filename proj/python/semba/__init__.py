"""Python access to the semba search, fusion, foveation and metric routines."""

from ._core import (
    cauc,
    cig,
    cnss,
    cumulative,
    digamma,
    dirichlet_sample,
    fit_dirichlet,
    fixation_edit_distance,
    foveate,
    inverse_digamma,
    kaplan_update,
    search,
    sequence_score,
    simulate,
)

__all__ = [
    "cauc",
    "cig",
    "cnss",
    "cumulative",
    "digamma",
    "dirichlet_sample",
    "fit_dirichlet",
    "fixation_edit_distance",
    "foveate",
    "inverse_digamma",
    "kaplan_update",
    "search",
    "sequence_score",
    "simulate",
]
