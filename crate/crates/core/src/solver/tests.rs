use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::circuit::{build_layer, Tile};
use crate::dataio::{LayerWeights, WeightsBundle};
use crate::mapping::{map_weights, MappingOptions};
use crate::params::HyperParams;

const G_MIN: f64 = 1.0 / 25.5e3;
const G_MAX: f64 = 1.0 / 8.5e3;

fn random_tile(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r_seg: f64) -> Tile<f64> {
    let g = (0..rows * cols).map(|_| rng.random_range(G_MIN..=G_MAX)).collect();
    Tile::with_wires(rows, cols, g, r_seg, r_seg)
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-0.8..0.8)).collect()
}

/// Column currents of an ideal crossbar: `Gᵀ·v`.
fn matvec_oracle(tile: &Tile<f64>, v: &[f64]) -> Vec<f64> {
    (0..tile.cols)
        .map(|c| (0..tile.rows).map(|r| tile.g[r * tile.cols + c] * v[r]).sum())
        .collect()
}

fn solve(tile: &Tile<f64>, v: &[f64]) -> SolveResult<f64> {
    solve_tile(&assemble_mna(tile, v).unwrap()).unwrap()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max)
}

#[test]
fn single_cell_ohms_law() {
    let tile = Tile::<f64>::ideal(1, 1, vec![1e-4]);
    let sys = assemble_mna(&tile, &[0.8]).unwrap();
    assert_eq!(sys.unknowns(), 0);
    let out = solve_tile(&sys).unwrap();
    assert!((out.column_currents[0] - 8e-5).abs() < 1e-18);
    assert!((out.power - 6.4e-5).abs() < 1e-18);
}

#[test]
fn two_by_two_unknown_count() {
    let tile = Tile::with_wires(2, 2, vec![1e-4; 4], 5.0, 5.0);
    let sys = assemble_mna(&tile, &[0.1, 0.2]).unwrap();
    assert_eq!(sys.unknowns(), 8);
}

#[test]
fn half_ideal_wires_unknown_count() {
    let tile = Tile::with_wires(3, 2, vec![1e-4; 6], 5.0, 0.0);
    assert_eq!(assemble_mna(&tile, &[0.0; 3]).unwrap().unknowns(), 6);
}

#[test]
fn stamping_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (rows, cols) in [(1, 1), (3, 5), (8, 2), (16, 16)] {
        let tile = random_tile(&mut rng, rows, cols, 2.0);
        let sys = assemble_mna(&tile, &random_inputs(&mut rng, rows)).unwrap();
        assert!(sys.matrix().is_symmetric());
    }
}

#[test]
fn wrong_input_length() {
    let tile = Tile::ideal(2, 2, vec![1e-4; 4]);
    assert_eq!(
        assemble_mna(&tile, &[0.1]).unwrap_err(),
        SolverError::InputLength { expected: 2, found: 1 }
    );
}

#[test]
fn zero_parasitic_matches_matvec() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tile = random_tile(&mut rng, 4, 4, 0.0);
    let v = random_inputs(&mut rng, 4);
    let out = solve(&tile, &v);
    assert!(max_rel(&out.column_currents, &matvec_oracle(&tile, &v)) <= 1e-9);
}

#[test]
fn zero_drive_is_quiet() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tile = random_tile(&mut rng, 5, 3, 1.0);
    let out = solve(&tile, &[0.0; 5]);
    assert!(out.column_currents.iter().all(|&i| i == 0.0));
    assert_eq!(out.power, 0.0);
}

#[test]
fn energy_is_conserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..40 {
        let (rows, cols) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let r_seg = rng.random_range(0.1..200.0);
        let tile = random_tile(&mut rng, rows, cols, r_seg);
        let v = random_inputs(&mut rng, rows);
        let out = solve(&tile, &v);
        let delivered = out.source_power(&v);
        assert!(out.power >= 0.0);
        assert!((delivered - out.power).abs() <= 1e-8 * out.power.abs(), "{delivered} vs {}", out.power);
    }
}

#[test]
fn ideal_limit_convergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tile = random_tile(&mut rng, 12, 10, 0.0);
    let v: Vec<f64> = (0..12).map(|_| rng.random_range(0.1..0.8)).collect();
    let ideal = matvec_oracle(&tile, &v);
    assert!(max_rel(&solve(&tile, &v).column_currents, &ideal) < 1e-12);
    let mut last = f64::INFINITY;
    for r_seg in [1.0, 0.1, 0.01] {
        let t = Tile { r_seg_row: r_seg, r_seg_col: r_seg, ..tile.clone() };
        let err = max_rel(&solve(&t, &v).column_currents, &ideal);
        assert!(err < last, "error {err} did not shrink at r_seg {r_seg}");
        last = err;
    }
}

#[test]
fn ir_drop_reduces_every_column() {
    let tile = Tile::with_wires(10, 7, vec![1e-4; 70], 20.0, 20.0);
    let v = vec![0.5; 10];
    let out = solve(&tile, &v);
    for (i, ideal) in out.column_currents.iter().zip(matvec_oracle(&tile, &v)) {
        assert!(*i < ideal && *i > 0.0);
    }
}

#[test]
fn superposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let tile = random_tile(&mut rng, 9, 6, 3.0);
    let a = random_inputs(&mut rng, 9);
    let b = random_inputs(&mut rng, 9);
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let (ia, ib, iab) = (solve(&tile, &a), solve(&tile, &b), solve(&tile, &ab));
    for c in 0..6 {
        let sum = ia.column_currents[c] + ib.column_currents[c];
        assert!((iab.column_currents[c] - sum).abs() <= 1e-10 * iab.column_currents[c].abs().max(1e-12));
    }
}

#[test]
fn direct_and_iterative_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tile = random_tile(&mut rng, 20, 12, 13.8);
    let v = random_inputs(&mut rng, 20);
    let direct = TileSolver::new(&tile, SolveMethod::Direct).unwrap().solve(&v).unwrap();
    let cg = TileSolver::new(&tile, SolveMethod::Iterative).unwrap().solve(&v).unwrap();
    assert!(cg.iterations > 0);
    let peak = direct.column_currents.iter().fold(0.0f64, |m, i| m.max(i.abs()));
    for (a, b) in cg.column_currents.iter().zip(&direct.column_currents) {
        assert!((a - b).abs() <= 1e-8 * peak, "{a} vs {b}");
    }
}

#[test]
fn large_tile_uses_cg() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tile = random_tile(&mut rng, 81, 4, 13.8);
    let v: Vec<f64> = (0..81).map(|_| rng.random_range(0.0..0.8)).collect();
    let out = solve(&tile, &v);
    assert!(out.iterations > 0);
    assert!(out.relative_residual <= 1e-10);
}

#[test]
fn single_precision_tile() {
    let tile = Tile::<f32>::with_wires(8, 8, vec![1e-4; 64], 13.8, 13.8);
    let out = solve_tile(&assemble_mna(&tile, &[0.8f32; 8]).unwrap()).unwrap();
    let ideal = 8.0 * 1e-4 * 0.8;
    for i in out.column_currents {
        assert!(i < ideal && i > 0.9 * ideal);
    }
}

fn layer_error(hp: usize, vp: usize) -> f64 {
    let params = HyperParams::for_topology(&[16, 16]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w: Vec<f32> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f32> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = map_weights::<f64>(&w, &b, 16, 16, params.r_low, params.r_high, MappingOptions::default()).unwrap();
    let v: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..0.8)).collect();
    let mut rows_v = v.clone();
    rows_v.push(params.v_bias);

    let layer = build_layer(&m, hp, vp, &params, 0).unwrap();
    let mut sums = [vec![0.0; 16], vec![0.0; 16]];
    for tile in &layer.tiles {
        let mut v_in = v[tile.row_offset..tile.row_offset + tile.input_rows()].to_vec();
        if tile.has_bias {
            v_in.push(params.v_bias);
        }
        let out = solve(tile, &v_in);
        for (c, i) in out.column_currents.iter().enumerate() {
            sums[tile.polarity as usize][tile.col_offset + c] += i;
        }
    }
    let ideal = |g: &[f64]| -> Vec<f64> {
        (0..16).map(|c| (0..17).map(|r| g[r * 16 + c] * rows_v[r]).sum()).collect()
    };
    max_rel(&sums[0], &ideal(&m.g_pos)).max(max_rel(&sums[1], &ideal(&m.g_neg)))
}

#[test]
fn finer_partitions_degrade_less() {
    let mut grid = [[0.0; 3]; 3];
    for (a, hp) in [1, 2, 4].into_iter().enumerate() {
        for (b, vp) in [1, 2, 4].into_iter().enumerate() {
            grid[a][b] = layer_error(hp, vp);
        }
    }
    assert!(grid[0][0] > 1e-3, "wires must matter for this check: {}", grid[0][0]);
    for a in 0..3 {
        for b in 0..3 {
            if a + 1 < 3 {
                assert!(grid[a + 1][b] <= grid[a][b], "hp refinement at {a},{b}: {grid:?}");
            }
            if b + 1 < 3 {
                assert!(grid[a][b + 1] <= grid[a][b], "vp refinement at {a},{b}: {grid:?}");
            }
        }
    }
}

fn one_layer_graph(w: Vec<f32>, b: Vec<f32>, inputs: usize, outputs: usize, resistivity: f64) -> CircuitGraph<f64> {
    let mut params = HyperParams::for_topology(&[inputs, outputs]).unwrap();
    params.wire.resistivity = resistivity;
    let bundle = WeightsBundle::new(
        vec![inputs, outputs],
        vec![LayerWeights { inputs, outputs, w, b }],
    )
    .unwrap();
    CircuitGraph::build(&params, &bundle, MappingOptions::default()).unwrap()
}

#[test]
fn single_weight_differential_current() {
    let g = one_layer_graph(vec![1.0], vec![0.0], 1, 1, 0.0);
    let trace = forward(&g, &[0.8]).unwrap();
    let i_diff = trace.layers[0].i_diff()[0];
    assert!((i_diff - 6.274_5e-5).abs() < 1e-9, "{i_diff}");
    assert!((i_diff - 0.8 * (G_MAX - G_MIN)).abs() < 1e-18);
    assert!(trace.outputs()[0] > 0.0);
}

#[test]
fn zero_weights_rest_at_midrail() {
    let g = one_layer_graph(vec![0.0; 6], vec![0.0; 3], 2, 3, 1.9e-8);
    for input in [[0.0, 0.0], [0.8, 0.3]] {
        let trace = forward(&g, &input).unwrap();
        for &v in trace.outputs() {
            assert!(v.abs() < 1e-12, "{v}");
        }
    }
}

#[test]
fn total_power_accounts_for_neurons() {
    let mut g = one_layer_graph(vec![0.5, -0.25, 1.0, 0.0], vec![0.1, -0.1], 2, 2, 1.9e-8);
    g.params.neuron.static_power = 1e-6;
    let trace = forward(&g, &[0.4, 0.7]).unwrap();
    let expected = trace.layers[0].tile_power() + 2.0 * 1e-6;
    assert_eq!(trace.total_power, expected);
}

#[test]
fn latency_zero_without_capacitance_and_positive_with() {
    let g = one_layer_graph(vec![1.0; 4], vec![0.0; 2], 2, 2, 1.9e-8);
    assert!(forward(&g, &[0.1, 0.2]).unwrap().latency > 0.0);
    let mut flat = g.clone();
    for t in &mut flat.layers[0].tiles {
        t.c_seg_col = 0.0;
        t.c_seg_row = 0.0;
    }
    assert_eq!(estimate_latency(&flat, 0.0), 0.0);
    assert_eq!(estimate_latency(&flat, 1e-9), 1e-9);
}

#[test]
fn forward_rejects_wrong_width() {
    let g = one_layer_graph(vec![1.0; 4], vec![0.0; 2], 2, 2, 0.0);
    assert!(matches!(forward(&g, &[0.1]), Err(SolverError::InputLength { expected: 2, found: 1 })));
}
