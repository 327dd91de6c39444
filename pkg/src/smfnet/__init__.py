"""Distributed set-membership filtering with absolute and relative measurements."""

from .sets import (
    ConstrainedZonotope,
    IntervalBox,
    SampleCloud,
    cartesian_product,
    constrain_linear,
    contains,
    diameter,
    gnorm_proxy,
    interval_hull,
    intersect,
    is_empty,
    linear_image,
    minkowski_sum,
    project,
    sample_points,
)

__all__ = [
    "ConstrainedZonotope",
    "IntervalBox",
    "SampleCloud",
    "cartesian_product",
    "constrain_linear",
    "contains",
    "diameter",
    "gnorm_proxy",
    "interval_hull",
    "intersect",
    "is_empty",
    "linear_image",
    "minkowski_sum",
    "project",
    "sample_points",
]

__version__ = "0.1.0"
