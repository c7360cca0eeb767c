import csv
import io
import math

import numpy as np
import pytest

from cubeflows.lattice import Permutation, Tiling, compose, l2_distance, whole_region
from cubeflows.pipeline import (
    CONSTANTS,
    EXPERIMENT_HEADER,
    PipelineConfig,
    PipelineError,
    choose_epsilon,
    compute_orbits,
    connect_to_identity,
    exponent_experiment,
    random_permutation_at_l2,
    step1_localize,
    step2_blockify,
    step3_finish,
)


def test_choose_epsilon_examples():
    assert choose_epsilon(2) == pytest.approx(2 / 7)
    assert choose_epsilon(3) == pytest.approx(1 / 4)
    assert choose_epsilon(5) == pytest.approx(1 / 6)
    with pytest.raises(PipelineError):
        choose_epsilon(1)


def test_config_derivation_snaps_to_divisor():
    t = Tiling(2, 64)
    cfg = PipelineConfig.derive(t, 0.05)
    assert cfg.epsilon == pytest.approx(2 / 7)
    assert t.n % cfg.coarse_cells == 0
    assert cfg.coarse_cells & (cfg.coarse_cells - 1) == 0  # power of two
    # delta^-eps ~ 2.35 -> nearest power-of-two divisor is 2
    assert cfg.coarse_cells == 2
    cfg2 = PipelineConfig.derive(t, 0.02)
    assert cfg2.coarse_cells == 4  # delta^-eps ~ 3.06 -> 4
    with pytest.raises(PipelineError):
        PipelineConfig(2, 64, 0.05, 0.9, 2)  # epsilon beyond 2/(2+nu)


def test_random_instance_generator_window_and_determinism():
    t = Tiling(2, 16)
    p1 = random_permutation_at_l2(t, 0.1, np.random.Generator(np.random.Philox(9)))
    p2 = random_permutation_at_l2(t, 0.1, np.random.Generator(np.random.Philox(9)))
    assert p1 == p2
    l2 = l2_distance(p1, Permutation.identity(t))
    assert 0.09 <= l2 <= 0.11


def test_step1_identity_and_all_local():
    t = Tiling(2, 16)
    cfg = PipelineConfig.derive(t, 0.05)
    r = step1_localize(Permutation.identity(t), cfg)
    assert r.flow.duration == 0 and r.cost == 0.0
    # all displacements below the threshold: nothing is colored
    p = Permutation.from_mapping(t, {(0, 0): (0, 1), (0, 1): (0, 0)})
    cfg2 = PipelineConfig.derive(t, l2_distance(p, Permutation.identity(t)))
    r2 = step1_localize(p, cfg2)
    assert r2.checks["colored_count"] == 0
    assert r2.flow.duration == 0


def test_step1_far_transposition_restored():
    t = Tiling(2, 64)
    a, b = (5, 7), (37, 7)
    p = Permutation.from_mapping(t, {a: b, b: a})
    delta = l2_distance(p, Permutation.identity(t))
    cfg = PipelineConfig.derive(t, delta, coarse_cells=8)
    r = step1_localize(p, cfg)
    assert r.checks["colored_count"] == 2
    assert r.checks["colored_count"] <= r.checks["colored_bound"]
    assert r.result((5, 7)) == (5, 7) and r.result((37, 7)) == (37, 7)
    assert r.checks["max_displacement"] <= r.checks["disp_bound"]


def test_step1_refuses_norm_violation():
    t = Tiling(2, 16)
    rng = np.random.Generator(np.random.Philox(1))
    p = random_permutation_at_l2(t, 0.1, rng)
    cfg = PipelineConfig(2, 16, 0.01, 2 / 7, 2)
    with pytest.raises(PipelineError):
        step1_localize(p, cfg)


def test_compute_orbits_identity_and_swap():
    t = Tiling(2, 16)
    cfg = PipelineConfig.derive(t, 0.1, coarse_cells=4)
    recs, coloring = compute_orbits(Permutation.identity(t), cfg)
    assert recs == [] and coloring.count(1) == 0 and coloring.count(2) == 0
    s = cfg.block_side
    pa, pb = (3, s - 1), (3, s)  # swap across the first slab interface
    p = Permutation.from_mapping(t, {pa: pb, pb: pa})
    recs, coloring = compute_orbits(p, cfg)
    assert len(recs) == 1
    assert recs[0].n_bar == 1
    assert coloring.count(2) == 1 and coloring.count(1) == 1


def test_compute_orbits_balance_on_random_local():
    t = Tiling(2, 32)
    rng = np.random.Generator(np.random.Philox(21))
    p = random_permutation_at_l2(t, 0.05, rng)
    cfg = PipelineConfig.derive(t, l2_distance(p, Permutation.identity(t)))
    recs, coloring = compute_orbits(p, cfg)
    # every record pairs a red seed with a black terminus
    col = coloring.color_of_cell()
    for r in recs:
        assert col[t.flat(r.seed)] == 2
        assert col[t.flat(r.cells[-1])] == 1
        assert all(col[t.flat(c)] == 0 for c in r.cells[:-1])


def test_compute_orbits_rejects_wide_displacement():
    t = Tiling(2, 16)
    a, b = (0, 0), (0, 12)
    p = Permutation.from_mapping(t, {a: b, b: a})
    cfg = PipelineConfig.derive(t, l2_distance(p, Permutation.identity(t)), coarse_cells=8)
    with pytest.raises(PipelineError):
        compute_orbits(p, cfg)


def test_step2_trivial_cases():
    t = Tiling(2, 16)
    cfg = PipelineConfig.derive(t, 0.05, coarse_cells=4)
    r = step2_blockify(Permutation.identity(t), cfg)
    assert r.flow.duration == 0
    # block-constant input: permute inside one coarse cube only
    s = cfg.block_side
    p = Permutation.from_mapping(t, {(0, 0): (s - 1, s - 1), (s - 1, s - 1): (0, 0)})
    r2 = step2_blockify(p, cfg)
    assert r2.flow.duration == 0
    assert r2.result == p


def test_step2_blockifies_random_local():
    t = Tiling(2, 32)
    rng = np.random.Generator(np.random.Philox(23))
    p = random_permutation_at_l2(t, 0.08, rng)
    cfg = PipelineConfig.derive(t, l2_distance(p, Permutation.identity(t)))
    r = step2_blockify(p, cfg)
    s = cfg.block_side
    cc = t.coords_array(np.arange(t.total)) // s
    img = t.coords_array(r.result.table) // s
    assert np.array_equal(cc, img)  # coarse identity
    assert r.checks["colored_volume"] <= r.checks["volume_bound"]


def test_step3_examples():
    t = Tiling(2, 16)
    cfg = PipelineConfig.derive(t, 0.05, coarse_cells=4)
    r = step3_finish(Permutation.identity(t), cfg)
    assert r.flow.duration == 0
    s = cfg.block_side
    # coarse swap of two adjacent coarse cubes, fine part identity
    tbl = np.arange(t.total, dtype=np.int64)
    c = t.coords_array(np.arange(t.total))
    in_a = (c[:, 0] // s == 0) & (c[:, 1] // s == 0)
    in_b = (c[:, 0] // s == 1) & (c[:, 1] // s == 0)
    shift = s * t.axis_stride(0)
    tbl[in_a] += shift
    tbl[in_b] -= shift
    p = Permutation(t, tbl)
    r2 = step3_finish(p, cfg)
    assert r2.flow.apply(p).is_identity()
    assert r2.checks["coarse_moved"] == 2
    # permutations inside coarse cubes only: coarse routing cost is zero
    rng = np.random.default_rng(4)
    tbl2 = np.arange(t.total, dtype=np.int64)
    blk = (c[:, 0] // s == 1) & (c[:, 1] // s == 1)
    cells = np.flatnonzero(blk)
    tbl2[cells] = cells[rng.permutation(len(cells))]
    p2 = Permutation(t, tbl2)
    r3 = step3_finish(p2, cfg)
    assert r3.flow.apply(p2).is_identity()
    assert r3.checks["coarse_cost"] == 0.0


def test_step3_rejects_non_block_constant():
    t = Tiling(2, 16)
    cfg = PipelineConfig.derive(t, 0.05, coarse_cells=4)
    s = cfg.block_side
    p = Permutation.from_mapping(t, {(s - 1, 0): (s, 0), (s, 0): (s - 1, 0)})
    with pytest.raises(PipelineError):
        step3_finish(p, cfg)


def test_connect_to_identity_examples():
    t = Tiling(2, 16)
    flow, cost, ledger = connect_to_identity(Permutation.identity(t))
    assert cost == 0.0 and flow.duration == 0
    p = Permutation.from_mapping(t, {(0, 0): (0, 1), (0, 1): (0, 0)})
    flow, cost, ledger = connect_to_identity(p)
    assert flow.apply(p).is_identity()
    assert cost >= l2_distance(p, Permutation.identity(t)) - 1e-12
    for st_rep in ledger["steps"]:
        assert st_rep["cost"] <= st_rep["bound"] + 1e-9


@pytest.mark.parametrize("nu,n,delta,seed", [(2, 32, 0.06, 3), (3, 8, 0.12, 4)])
def test_connect_to_identity_random(nu, n, delta, seed):
    t = Tiling(nu, n)
    rng = np.random.Generator(np.random.Philox(seed))
    p = random_permutation_at_l2(t, delta, rng)
    flow, cost, ledger = connect_to_identity(p)
    assert flow.apply(p).is_identity()
    flow.validate()


def test_exponent_experiment_rows_and_csv(tmp_path):
    rows, slope = exponent_experiment(2, [], [0.1], [1])
    assert rows == [] and slope is None
    out = tmp_path / "exp.csv"
    rows, slope = exponent_experiment(2, [16], [0.1, 0.05], [1], str(out))
    assert len(rows) == 2
    for r in rows:
        assert r["total"] >= r["l2"]  # length dominates chord on full runs
        assert r["alpha_ref"] == pytest.approx(2 / 7)
    with open(out) as fh:
        parsed = list(csv.DictReader(fh))
    assert len(parsed) == 2
    assert list(parsed[0].keys()) == EXPERIMENT_HEADER
