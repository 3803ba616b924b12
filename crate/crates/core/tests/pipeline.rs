use imac_core::dataio::{
    load_weights, parse_idx_images, parse_idx_labels, save_weights, write_idx_images, write_idx_labels, Dataset,
    LayerWeights, WeightsBundle,
};
use imac_core::harness::{
    argmax, ideal_inference, normalize_pixels, run_eval, train_fixture, Activation, BlobSpec, FixtureConfig,
    SimOptions,
};
use imac_core::mapping::MappingOptions;
use imac_core::params::{HyperParams, NeuronKind};
use imac_core::solver::{SolveMethod, Simulator};
use imac_core::{CircuitGraph64, Simulator64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_bundle(topology: &[usize], rng: &mut ChaCha8Rng) -> WeightsBundle {
    let layers = topology
        .windows(2)
        .map(|p| LayerWeights {
            inputs: p[0],
            outputs: p[1],
            w: (0..p[0] * p[1]).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b: (0..p[1]).map(|_| rng.random_range(-0.5..0.5)).collect(),
        })
        .collect();
    WeightsBundle::new(topology.to_vec(), layers).unwrap()
}

#[test]
fn ideal_circuit_matches_float_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in [NeuronKind::Sigmoid, NeuronKind::Tanh, NeuronKind::Relu] {
        let mut agree = 0;
        for _ in 0..100 {
            let weights = random_bundle(&[8, 6, 4], &mut rng);
            let mut params = HyperParams::for_topology(&[8, 6, 4]).unwrap();
            params.wire.resistivity = 0.0;
            params.neuron.kind = kind;
            params.h_p = vec![rng.random_range(1..=3), rng.random_range(1..=3)];
            params.v_p = vec![rng.random_range(1..=3), rng.random_range(1..=2)];
            let pixels: Vec<u8> = (0..8).map(|_| rng.random()).collect();

            let graph = CircuitGraph64::build(&params, &weights, MappingOptions::default()).unwrap();
            let sim: Simulator64 = Simulator::new(graph, SolveMethod::Auto).unwrap();
            let v = imac_core::dataio::encode_pixels::<f64>(&pixels, &params.input_encoding);
            let trace = sim.forward(&v).unwrap();

            let act = Activation::from_params(&params);
            let u = normalize_pixels(&pixels, &params.input_encoding, params.v_bias);
            let (class, layers) = ideal_inference(&weights, &u, &act);
            let expected: Vec<f64> = layers.last().unwrap().iter().map(|a| a * params.v_bias).collect();
            for (got, want) in trace.outputs().iter().zip(&expected) {
                assert!((got - want).abs() < 1e-9, "{kind}: {got} vs {want}");
            }
            agree += usize::from(argmax(trace.outputs()) == class);
        }
        assert!(agree >= 99, "{kind}: {agree}/100");
    }
}

#[test]
fn files_on_disk_reproduce_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let params = HyperParams::for_topology(&[6, 5, 3]).unwrap();
    let cfg = FixtureConfig { blobs: BlobSpec::for_topology(&params.topology), seed: 5, epochs: 20, lr: 0.1 };
    let fx = train_fixture(&cfg, &params).unwrap();

    let manifest = dir.path().join("net.json");
    save_weights(&fx.weights, &manifest).unwrap();
    let images = dir.path().join("images.idx");
    let labels = dir.path().join("labels.idx");
    std::fs::write(&images, write_idx_images(&fx.test.images)).unwrap();
    std::fs::write(&labels, write_idx_labels(&fx.test.labels)).unwrap();

    let weights = load_weights(&manifest).unwrap();
    assert_eq!(weights, fx.weights);
    let data = Dataset::load(&images, &labels).unwrap();
    assert_eq!(parse_idx_images(&std::fs::read(&images).unwrap()).unwrap(), fx.test.images);
    assert_eq!(parse_idx_labels(&std::fs::read(&labels).unwrap()).unwrap(), fx.test.labels);

    let opts = SimOptions::default();
    let a = run_eval::<f64>(&params, &fx.weights, &fx.test, 25, &opts).unwrap();
    let b = run_eval::<f64>(&params, &weights, &data, 25, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn more_tiles_draw_more_power() {
    let params = HyperParams::for_topology(&[16, 8, 4]).unwrap();
    let cfg = FixtureConfig { blobs: BlobSpec::for_topology(&params.topology), seed: 17, epochs: 30, lr: 0.1 };
    let fx = train_fixture(&cfg, &params).unwrap();
    let opts = SimOptions { per_sample: false, ..SimOptions::default() };
    let mut last = 0.0;
    for (h, v) in [(1, 1), (2, 1), (2, 2), (4, 2), (4, 4)] {
        let p = params.with_partitions(vec![h, h], vec![v, v.min(4)]);
        let report = run_eval::<f64>(&p, &fx.weights, &fx.test, 20, &opts).unwrap();
        assert!(report.p_average >= last, "({h},{v}): {} < {last}", report.p_average);
        last = report.p_average;
    }
}

#[test]
fn quantized_mapping_runs_end_to_end() {
    let params = HyperParams::for_topology(&[6, 4, 2]).unwrap();
    let cfg = FixtureConfig { blobs: BlobSpec::for_topology(&params.topology), seed: 2, epochs: 20, lr: 0.1 };
    let fx = train_fixture(&cfg, &params).unwrap();
    let mapping = MappingOptions { mode: imac_core::mapping::ConductanceMode::Quantized, ..MappingOptions::default() };
    let report = run_eval::<f64>(&params, &fx.weights, &fx.test, 10, &SimOptions { mapping, ..SimOptions::default() })
        .unwrap();
    assert_eq!(report.n_samples, 10);
    assert!(report.p_average > 0.0);
}
