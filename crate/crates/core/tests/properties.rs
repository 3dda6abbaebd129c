use iocc::centers::{update_centers, CenterBank};
use iocc::data::{cluster_sizes, read_binary, read_jsonl, write_binary, write_jsonl, BatchSampler};
use iocc::eval::{hungarian_accuracy, nmi, predicted_cluster_count};
use iocc::ieot::{
    inner_solve, mm_solve_from, neg_log, pseudo_labels, similarity_matrix, SolverOptions, TransportProblem,
};
use iocc::losses::{cacl_loss, cross_entropy, instance_loss, supervised_ce_loss, InstanceDenominator};
use iocc::model::softmax_rows;
use iocc::EmbeddingDataset;
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>, scale: f64) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(move |(n, k)| {
        prop::collection::vec(-scale..scale, n * k).prop_map(move |v| Array2::from_shape_vec((n, k), v).unwrap())
    })
}

fn simplex_rows(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Array2<f64>> {
    matrix(rows, cols, 4.0).prop_map(|l| softmax_rows(&l))
}

fn dataset() -> impl Strategy<Value = EmbeddingDataset> {
    (2usize..12, 1usize..5, 1usize..4, any::<bool>(), any::<u64>()).prop_flat_map(|(n, d, k, views, seed)| {
        (
            prop::collection::vec(-1e3..1e3f64, n * d),
            prop::collection::vec(0..k, n),
            prop::collection::btree_set(0..n, 0..n),
        )
            .prop_map(move |(x, y, labeled)| {
                let x = Array2::from_shape_vec((n, d), x).unwrap();
                let views = views.then(|| iocc::data::make_views(&x, 0.1, seed));
                EmbeddingDataset::new(x, views, Some(y), labeled.into_iter().collect(), k).unwrap()
            })
    })
}

fn inf_norm(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_round_trip_is_exact(ds in dataset()) {
        let mut bytes = Vec::new();
        write_binary(&ds, &mut bytes).unwrap();
        let back = read_binary(&bytes[..], bytes.len() as u64).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn jsonl_round_trip_is_exact(ds in dataset()) {
        let ds = EmbeddingDataset { views: None, ..ds };
        let mut text = Vec::new();
        write_jsonl(&ds, &mut text).unwrap();
        let back = read_jsonl(&text[..]).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn truncated_binary_is_rejected(ds in dataset(), cut in 1usize..64) {
        let mut bytes = Vec::new();
        write_binary(&ds, &mut bytes).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(read_binary(&bytes[..keep], keep as u64).is_err());
    }

    #[test]
    fn cluster_sizes_sum_to_n(k in 1usize..10, extra in 0usize..500, ratio in 1.0..50.0f64) {
        let n = k + extra;
        let sizes = cluster_sizes(n, k, ratio);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().all(|&s| s >= 1));
        let balanced = cluster_sizes(n, k, 1.0);
        prop_assert!(balanced.iter().max().unwrap() - balanced.iter().min().unwrap() <= 1);
    }

    #[test]
    fn batches_keep_pools_apart(ds in dataset(), seed in any::<u64>(), b in 1usize..20, mu_b in 1usize..40) {
        prop_assume!(!ds.labeled_idx.is_empty() && ds.labeled_idx.len() < ds.n());
        let sampler = BatchSampler::new(&ds).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = sampler.sample(&ds, b, mu_b, 0.0, &mut rng);
        prop_assert_eq!(batch.labeled.indices.len(), b);
        prop_assert_eq!(batch.unlabeled.indices.len(), mu_b);
        prop_assert!(batch.labeled.indices.iter().all(|i| ds.labeled_idx.contains(i)));
        prop_assert!(batch.unlabeled.indices.iter().all(|i| !ds.labeled_idx.contains(i)));
    }

    #[test]
    fn similarity_is_symmetric_unit_diagonal(p in simplex_rows(1..=12, 1..=5)) {
        let s = similarity_matrix(p.view()).unwrap();
        for i in 0..s.nrows() {
            prop_assert!((s[[i, i]] - 1.0).abs() < 1e-12);
            for j in 0..s.ncols() {
                prop_assert_eq!(s[[i, j]], s[[j, i]]);
                prop_assert!(s[[i, j]] >= 0.0 && s[[i, j]] <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn solver_is_feasible_and_monotone(
        p in simplex_rows(1..=16, 1..=5),
        eps1 in prop::sample::select(vec![0.2, 1.0]),
        eps2 in prop::sample::select(vec![1e-3, 1.2, 1000.0]),
        eps3 in prop::sample::select(vec![0.0, 0.75, 25.0]),
        b0 in prop::collection::vec(0.05..1.0f64, 5),
    ) {
        let k = p.ncols();
        let mut b0 = Array1::from(b0[..k].to_vec());
        b0 /= b0.sum();
        let problem = TransportProblem::new(p, eps1, eps2, eps3, 6, 10).unwrap();
        let plan = mm_solve_from(&problem, &SolverOptions::default(), b0).unwrap();
        prop_assert!(plan.row_residual(problem.a.view()) <= 1e-6);
        prop_assert!(plan.col_residual() <= 1e-6);
        prop_assert!((plan.b.sum() - 1.0).abs() <= 1e-9);
        prop_assert!(plan.b.iter().all(|&v| v > 0.0));
        for w in plan.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8, "trace {:?}", plan.objective_trace);
        }
    }

    #[test]
    fn constant_cost_shift_leaves_plan_unchanged(p in simplex_rows(2..=10, 2..=4), c in -50.0..50.0f64) {
        let m = neg_log(p.view());
        let a = Array1::from_elem(p.nrows(), 1.0 / p.nrows() as f64);
        let b = Array1::from_elem(p.ncols(), 1.0 / p.ncols() as f64);
        let opts = SolverOptions::default();
        let x = inner_solve(m.view(), a.view(), 1.0, 1.2, 10, b.view(), &opts).unwrap();
        let y = inner_solve((&m + c).view(), a.view(), 1.0, 1.2, 10, b.view(), &opts).unwrap();
        prop_assert!(inf_norm(&x.q, &y.q) <= 1e-9);
    }

    #[test]
    fn inner_marginal_is_softmax_of_duals(p in simplex_rows(2..=10, 2..=4), eps2 in 0.1..100.0f64) {
        let m = neg_log(p.view());
        let a = Array1::from_elem(p.nrows(), 1.0 / p.nrows() as f64);
        let b = Array1::from_elem(p.ncols(), 1.0 / p.ncols() as f64);
        let sol = inner_solve(m.view(), a.view(), 1.0, eps2, 10, b.view(), &SolverOptions::default()).unwrap();
        let logits = sol.g.mapv(|g| -g / eps2).insert_axis(Axis(0));
        let expected = softmax_rows(&logits).row(0).to_owned();
        for (x, y) in sol.b.iter().zip(&expected) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn labels_survive_monotone_row_transforms(q in matrix(1..=10, 1..=5, 1.0), scale in prop::collection::vec(0.1..10.0f64, 10)) {
        let q = q.mapv(f64::abs);
        let mut t = q.clone();
        for (i, mut row) in t.axis_iter_mut(Axis(0)).enumerate() {
            row.mapv_inplace(|v| (scale[i] * v).powi(3) + scale[i]);
        }
        prop_assert_eq!(pseudo_labels(q.view()), pseudo_labels(t.view()));
    }

    #[test]
    fn standard_losses_are_non_negative(
        z1 in matrix(2..=6, 3..=3, 2.0),
        z2 in matrix(6..=6, 3..=3, 2.0),
        labels in prop::collection::vec(0usize..3, 6),
        t in 0.2..3.0f64,
    ) {
        let n = z1.nrows();
        let z2 = z2.slice(ndarray::s![..n, ..]).to_owned();
        let centers = Array2::from_shape_vec((3, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let labels = &labels[..n];
        prop_assume!(z1.rows().into_iter().chain(z2.rows()).all(|r| r.dot(&r) > 1e-6));
        let cacl = cacl_loss(z1.view(), z2.view(), centers.view(), labels, t).unwrap();
        prop_assert!(cacl.value >= 0.0);
        let ntxent = instance_loss(z1.view(), z2.view(), t, InstanceDenominator::WithPositive).unwrap();
        prop_assert!(ntxent.value >= 0.0);
        let p1 = softmax_rows(&z1);
        let p2 = softmax_rows(&z2);
        prop_assert!(cross_entropy(p1.view(), labels).unwrap().0 >= 0.0);
        let ce = supervised_ce_loss(p1.view(), p2.view(), labels).unwrap();
        prop_assert!(ce.value >= 0.0);
        prop_assert_eq!(ce.grads[0].dim(), p1.dim());
        prop_assert_eq!(cacl.grads[1].dim(), z2.dim());
    }

    #[test]
    fn instance_loss_is_view_symmetric(z1 in matrix(2..=6, 4..=4, 2.0), z2 in matrix(6..=6, 4..=4, 2.0)) {
        let z2 = z2.slice(ndarray::s![..z1.nrows(), ..]).to_owned();
        prop_assume!(z1.rows().into_iter().chain(z2.rows()).all(|r| r.dot(&r) > 1e-6));
        let a = instance_loss(z1.view(), z2.view(), 1.0, InstanceDenominator::NegativesOnly).unwrap();
        let b = instance_loss(z2.view(), z1.view(), 1.0, InstanceDenominator::NegativesOnly).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
    }

    #[test]
    fn updated_centers_are_unit_norm(z in matrix(1..=12, 2..=4, 3.0), seed in any::<u64>()) {
        let n = z.nrows();
        let labels: Vec<usize> = (0..n).map(|i| (i as u64 ^ seed) as usize % 3).collect();
        prop_assume!(z.rows().into_iter().all(|r| r.dot(&r) > 1e-6));
        let Ok(bank) = update_centers(z.view(), &labels, Array2::zeros((0, z.ncols())).view(), &[], &[], &CenterBank::empty(3, z.ncols())) else {
            return Ok(());
        };
        for (j, row) in bank.c.rows().into_iter().enumerate() {
            if bank.valid[j] {
                prop_assert!((row.dot(&row) - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn accuracy_ignores_cluster_ids(y in prop::collection::vec(0usize..4, 1..30), seed in any::<u64>()) {
        let n = y.len();
        let yhat: Vec<usize> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 1) >> 7) as usize % 4).collect();
        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<usize> = yhat.iter().map(|&l| perm[l]).collect();
        let a = hungarian_accuracy(&y, &yhat, 4).unwrap();
        prop_assert!((a - hungarian_accuracy(&y, &permuted, 4).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
        let v = nmi(&y, &yhat).unwrap();
        prop_assert!((v - nmi(&yhat, &y).unwrap()).abs() <= 1e-12);
        prop_assert!((v - nmi(&y, &permuted).unwrap()).abs() <= 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        let mut shuffled = yhat.clone();
        shuffled.reverse();
        prop_assert_eq!(predicted_cluster_count(&yhat), predicted_cluster_count(&shuffled));
    }
}
