"""Discrete incompressible flows on cube tilings.

Build, validate, cost, and optimize discrete flows (sequences of
cube-permutation movements) on tilings of the unit cube; construct explicit
flows connecting any permutation to the identity with cost controlled by a
power of its L2 distance; cross-check against exact shortest-path oracles at
desk scale; and numerically realize the piecewise-affine divergence-free
fields that swap distant cubes of an array.
"""
from .lattice import (
    Coloring,
    Permutation,
    RegionSpec,
    Tiling,
    are_adjacent,
    compose,
    cube_center,
    invert,
    l2_distance,
    region_cubes,
    whole_region,
)
from .movements import (
    CoupleMovement,
    CoupleSequence,
    DiscreteFlow,
    SwapMovement,
    apply_movement,
    embed_swaps_as_couples,
    flow_apply_and_cost,
    lower_couples_to_swaps,
    movement_cost,
    validate_movement,
)
from .pipeline import (
    PipelineConfig,
    choose_epsilon,
    compute_orbits,
    connect_to_identity,
    exponent_experiment,
    step1_localize,
    step2_blockify,
    step3_finish,
)
from .routing import (
    color_array_flow,
    color_cube_flow,
    color_rect_flow,
    route_array,
    route_rectangle,
)
from .oracle import OracleLimits, equivalence_report, exact_distance
from .contflow import (
    FrameParams,
    PiecewiseField,
    build_swap_field,
    integrate_time1_map,
    l1l2_norm,
    verify_swap_map,
    weak_divergence_residual,
)

__version__ = "0.1.0"
