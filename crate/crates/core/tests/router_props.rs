//! Properties of the router forward pass, loss and graph generation.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sdag::embedding::HashedEmbedder;
use sdag::router::{
    backward, forward, generate_sdag, loss_and_logit_grad, sdag_from_output, sigmoid, GenerateConfig, Labels,
    LossWeights, RouterDims, RouterOutput, RouterParams,
};
use sdag::subject::{build_ground_truth_dag, validate_dag, Subject, SubjectWeights, MAX_DAG_NODES, NUM_SUBJECTS};

fn small_dims() -> RouterDims {
    RouterDims {
        subject_dim: 6,
        question_dim: 16,
        hidden: 6,
        layers: 2,
        head_hidden: 6,
        ..RouterDims::default()
    }
}

fn random_params(seed: u64, scale: f64) -> RouterParams {
    let mut params = RouterParams::init(small_dims(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, scale).unwrap();
    for (_, t) in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }
    params
}

fn subject_strategy() -> impl Strategy<Value = Subject> {
    (0..NUM_SUBJECTS).prop_map(|i| Subject::from_index(i).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generated_graphs_are_valid(seed in any::<u64>(), scale in 0.05f64..2.0, text in "[a-z ]{0,60}") {
        let params = random_params(seed, scale);
        let embedder = HashedEmbedder::new(16).unwrap();
        let g = generate_sdag(&text, &params, &embedder, &GenerateConfig::default()).unwrap();
        let report = validate_dag(&g);
        prop_assert!(report.is_valid(), "{:?}", report);
        prop_assert!(!g.nodes.is_empty() && g.nodes.len() <= MAX_DAG_NODES);
        prop_assert!(!g.contains(Subject::Other));
        prop_assert!(g.topological_order().is_some());
    }

    #[test]
    fn arbitrary_scores_give_valid_graphs(
        nodes in prop::collection::vec(0.0f64..=1.0, NUM_SUBJECTS),
        edges in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, NUM_SUBJECTS), NUM_SUBJECTS),
        node_threshold in 0.0f64..1.0,
        max_nodes in 1usize..=MAX_DAG_NODES,
    ) {
        let out = RouterOutput::from_probs(nodes, edges);
        let cfg = GenerateConfig { node_threshold, max_nodes, ..GenerateConfig::default() };
        let g = sdag_from_output(&out, &cfg);
        prop_assert!(validate_dag(&g).is_valid());
        prop_assert!(g.nodes.len() <= max_nodes);
        for e in &g.edges {
            prop_assert!(out.node_probs[e.src.index()] <= out.node_probs[e.dst.index()]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn node_ranking_survives_positive_output_scaling(seed in any::<u64>(), c in 0.01f64..100.0) {
        let params = random_params(seed, 0.5);
        let mut scaled = params.clone();
        for v in scaled.node_head.out.weight.data.iter_mut().chain(scaled.node_head.out.bias.iter_mut()) {
            *v *= c;
        }
        let q: Vec<f64> = (0..16).map(|i| ((seed >> (i % 60)) & 7) as f64 / 7.0).collect();
        let a = forward(&params, &q).unwrap().output;
        let b = forward(&scaled, &q).unwrap().output;
        for i in 0..NUM_SUBJECTS {
            prop_assert!((b.node_logits[i] - c * a.node_logits[i]).abs() <= 1e-9 * (1.0 + c * a.node_logits[i].abs()));
            for j in 0..NUM_SUBJECTS {
                if a.node_logits[i] < a.node_logits[j] - 1e-9 {
                    prop_assert!(b.node_logits[i] < b.node_logits[j]);
                }
            }
        }
    }

    #[test]
    fn masked_edges_never_touch_loss_or_gradients(
        seed in any::<u64>(),
        subjects in prop::collection::btree_set(subject_strategy(), 1..5),
        z in -50.0f64..50.0,
    ) {
        let weights = SubjectWeights::from_pairs(subjects.iter().map(|s| (*s, 1.0 / subjects.len() as f64)));
        let Ok(dag) = build_ground_truth_dag(&weights, 0.1) else { return Ok(()); };
        let labels = Labels::from_dag(&dag);
        let params = random_params(seed, 0.3);
        let q: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let cache = forward(&params, &q).unwrap();
        let base = loss_and_logit_grad(&cache.output, &labels, LossWeights::default()).unwrap();
        let mut base_grads = params.zeros_like();
        backward(&params, &cache, &base, &mut base_grads);

        let mut perturbed = cache;
        for i in 0..NUM_SUBJECTS {
            for j in 0..NUM_SUBJECTS {
                if i != j && labels.edge_masked(i, j) {
                    perturbed.output.edge_logits[i][j] = z;
                    perturbed.output.edge_probs[i][j] = sigmoid(z);
                }
            }
        }
        let after = loss_and_logit_grad(&perturbed.output, &labels, LossWeights::default()).unwrap();
        let mut after_grads = params.zeros_like();
        backward(&params, &perturbed, &after, &mut after_grads);
        prop_assert_eq!(base.loss.to_bits(), after.loss.to_bits());
        prop_assert_eq!(base, after);
        prop_assert_eq!(base_grads, after_grads);
    }
}
