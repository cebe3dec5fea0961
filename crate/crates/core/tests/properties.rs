use hyperforge::coarsening::{sample_coarsening_sequence, CoarseningParams};
use hyperforge::data::gen_tree_sized;
use hyperforge::expansion::{expand, refine, split_budget, ExpansionVectors, RefinementDecision};
use hyperforge::flow::{ot_couple, simplex_project};
use hyperforge::hypergraph::{clique_expand, collapse_bipartite, read_jsonl, star_expand, write_jsonl, Hypergraph};
use hyperforge::metrics::{is_valid_tree, wasserstein_1d};
use hyperforge::pipeline::{expansion_count, select_top};
use hyperforge::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type H = Hypergraph<f64>;

fn hypergraph() -> impl Strategy<Value = H> {
    (1usize..14).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(0..n, 1..5), 0..12)
            .prop_map(move |edges| Hypergraph::dedup_from(n, edges).expect("indices in range"))
    })
}

fn featured(h: H, seed: u64) -> H {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = Matrix::from_fn(h.num_nodes(), 2, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
    h.with_node_features(Some(f)).expect("rows match")
}

fn sorted_rows(m: &Matrix<f64>) -> Vec<Vec<u64>> {
    let mut rows: Vec<Vec<u64>> = (0..m.rows()).map(|i| m.row(i).iter().map(|v| v.to_bits()).collect()).collect();
    rows.sort();
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn star_expansion_round_trips(h in hypergraph()) {
        let b = star_expand(&h);
        prop_assert_eq!(b.num_left(), h.num_nodes());
        prop_assert_eq!(b.num_right(), h.num_hyperedges());
        prop_assert_eq!(b.num_edges(), h.num_incidences());
        prop_assert_eq!(collapse_bipartite(&b).unwrap().canonical_hyperedges(), h.canonical_hyperedges());
    }

    #[test]
    fn clique_weights_count_shared_hyperedges(h in hypergraph()) {
        let c = clique_expand(&h);
        for u in 0..h.num_nodes() {
            for v in u + 1..h.num_nodes() {
                let shared = h.hyperedges().iter().filter(|e| e.contains(&u) && e.contains(&v)).count();
                prop_assert_eq!(c.weight(u, v), (shared > 0).then_some(shared as f64));
            }
        }
    }

    #[test]
    fn jsonl_round_trips(h in hypergraph(), seed in any::<u64>()) {
        let h = featured(h, seed);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, std::slice::from_ref(&h)).unwrap();
        let back: Vec<H> = read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(back[0].canonical_hyperedges(), h.canonical_hyperedges());
        prop_assert_eq!(back[0].node_features(), h.node_features());
    }

    #[test]
    fn coarsening_conserves_budget_and_reconstructs(h in hypergraph(), seed in any::<u64>()) {
        let h = featured(h, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = sample_coarsening_sequence(&h, &CoarseningParams::default(), &mut rng).unwrap();
        prop_assert_eq!(seq.levels.last().unwrap().bipartite.num_left(), 1);
        for (l, level) in seq.levels.iter().enumerate() {
            prop_assert_eq!(level.bipartite.total_budget(), h.num_nodes());
            if l > 0 {
                prop_assert!(seq.reconstruct_finer(l).unwrap().same_content(&seq.levels[l - 1].bipartite));
                prop_assert!(level.bipartite.num_left() < seq.levels[l - 1].bipartite.num_left());
            }
        }
    }

    #[test]
    fn identity_refinement_is_a_no_op(n in 2usize..30, seed in any::<u64>()) {
        let h: H = featured(gen_tree_sized(n, &mut ChaCha8Rng::seed_from_u64(seed)), seed);
        let b = star_expand(&h);
        let expanded = expand(&b, &ExpansionVectors::ones(b.num_left(), b.num_right())).unwrap();
        let refined = refine(&expanded, &RefinementDecision::identity(&expanded)).unwrap();
        prop_assert!(refined.same_content(&b));
    }

    #[test]
    fn generated_trees_are_valid(n in 1usize..40, seed in any::<u64>()) {
        let h: H = gen_tree_sized(n, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(h.num_nodes(), n);
        prop_assert!(is_valid_tree(&h));
    }

    #[test]
    fn split_budget_conserves(budget in 1usize..50, raw in prop::collection::vec(0.0f64..1.0, 1..4)) {
        prop_assume!(budget >= raw.len());
        let s: f64 = raw.iter().sum();
        prop_assume!(s > 1e-6);
        let fractions: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let parts = split_budget(budget, &fractions).unwrap();
        prop_assert_eq!(parts.iter().sum::<usize>(), budget);
        prop_assert!(parts.iter().all(|&p| p >= 1));
    }

    #[test]
    fn simplex_projection_is_idempotent(z in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let p = simplex_project(&z).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        let q = simplex_project(&p).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ot_coupling_permutes_noise_within_groups(seed in any::<u64>(), groups in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = 2 * groups;
        let noise = Matrix::from_fn(rows, 2, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let targets = Matrix::from_fn(rows, 2, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let g: Vec<Vec<usize>> = (0..groups).map(|i| vec![2 * i, 2 * i + 1]).collect();
        let coupled = ot_couple(&g, &noise, &targets).unwrap();
        let cost = |z: &Matrix<f64>| (0..rows).map(|i| z.row(i).iter().zip(targets.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum::<f64>();
        prop_assert!(cost(&coupled) <= cost(&noise) + 1e-12);
        for grp in &g {
            let sub = |m: &Matrix<f64>| sorted_rows(&m.gather_rows(grp));
            prop_assert_eq!(sub(&coupled), sub(&noise));
        }
    }

    #[test]
    fn wasserstein_is_a_metric_on_samples(
        a in prop::collection::vec(-10.0f64..10.0, 1..20),
        b in prop::collection::vec(-10.0f64..10.0, 1..20),
        c in prop::collection::vec(-10.0f64..10.0, 1..20),
    ) {
        let d = |x: &[f64], y: &[f64]| wasserstein_1d(x, y).unwrap();
        prop_assert!(d(&a, &a).abs() < 1e-12);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-9);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn expansion_count_reaches_target(n in 1usize..200, extra in 1usize..200, rho in 0.05f64..0.6) {
        let target = n + extra;
        let k = expansion_count(n, target, rho);
        prop_assert!(k >= 1 && k <= extra);
        prop_assert!(k == extra || k as f64 >= rho * (n + k) as f64 - 1e-9);
        prop_assert_eq!(expansion_count(target, target, rho), 0);
    }

    #[test]
    fn select_top_picks_the_best_eligible(scores in prop::collection::vec(-3.0f64..3.0, 1..20), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eligible: Vec<bool> = scores.iter().map(|_| rand::Rng::random_bool(&mut rng, 0.7)).collect();
        let count = eligible.iter().filter(|&&e| e).count();
        let v = select_top(&scores, &eligible, count / 2 + 1);
        prop_assert!(v.iter().all(|&f| f == 1 || f == 2));
        let picked: Vec<usize> = (0..v.len()).filter(|&i| v[i] == 2).collect();
        prop_assert_eq!(picked.len(), (count / 2 + 1).min(count));
        prop_assert!(picked.iter().all(|&i| eligible[i]));
        let worst_picked = picked.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for i in (0..scores.len()).filter(|i| eligible[*i] && !picked.contains(i)) {
            prop_assert!(scores[i] <= worst_picked);
        }
    }
}
