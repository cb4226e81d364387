use std::collections::BTreeSet;

use cal_core::data::{ClothesRegistry, Dataset, PkSampler, Sample, SampleLabels, Split};
use cal_core::datagen::{read_dataset, write_dataset};
use cal_core::eval::{build_gallery_mask, convergence_stats, score_similarities, Mode, Protocol};
use cal_core::losses::{cal_weights, positive_weights, CalWeights, CosineClassifierHead};
use cal_core::numerics::Matrix;
use proptest::prelude::*;

/// Outfit counts per identity; clothes labels are assigned consecutively.
fn registry_pairs(counts: &[usize]) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    let mut next = 0;
    for (id, &k) in counts.iter().enumerate() {
        for _ in 0..k {
            pairs.push((id as u32, next));
            next += 1;
        }
    }
    pairs
}

fn labels_strategy(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<SampleLabels>> {
    prop::collection::vec((0u32..4, 0u32..3, 0u32..3), n).prop_map(|v| {
        v.into_iter()
            .map(|(identity, outfit, camera)| SampleLabels {
                identity,
                clothes: identity * 10 + outfit,
                camera,
            })
            .collect()
    })
}

/// Distinct similarities on a coarse dyadic grid.
fn distinct_sims(rows: usize, cols: usize, perm_seed: u64) -> Matrix {
    let n = rows * cols;
    let mut values: Vec<f64> = (0..n).map(|k| k as f64 / 64.0 - 1.0).collect();
    let mut state = perm_seed | 1;
    for i in (1..n).rev() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        values.swap(i, (state % (i as u64 + 1)) as usize);
    }
    Matrix::new(rows, cols, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn registry_survives_dataset_round_trip(
        counts in prop::collection::vec(1usize..5, 1..8),
        dim in 1usize..4,
        seed in any::<u64>(),
    ) {
        let pairs = registry_pairs(&counts);
        let samples: Vec<Sample> = pairs
            .iter()
            .enumerate()
            .map(|(k, &(identity, clothes))| Sample {
                id: k as u64,
                feature: (0..dim).map(|j| ((seed >> (j % 60)) as f64).sin() + k as f64).collect(),
                identity,
                clothes,
                camera: (k % 3) as u32,
                split: [Split::Train, Split::Query, Split::Gallery][k % 3],
            })
            .collect();
        let ds = Dataset::new(dim, samples).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &ds);
        let original = ClothesRegistry::from_pairs(pairs).unwrap();
        prop_assert_eq!(ClothesRegistry::build(back.samples()).unwrap(), original);
    }

    #[test]
    fn cal_weights_sum_to_one(
        counts in prop::collection::vec(1usize..6, 2..6),
        pick in any::<prop::sample::Index>(),
        eps in 0.0f64..=1.0,
    ) {
        let registry = ClothesRegistry::from_pairs(registry_pairs(&counts)).unwrap();
        let clothes: Vec<u32> = registry.clothes().collect();
        let c = clothes[pick.index(clothes.len())];
        let id = registry.owner(c).unwrap();
        for cfg in [CalWeights::uniform(), CalWeights::epsilon(eps).unwrap()] {
            let q = cal_weights(&registry, id, c, &cfg).unwrap();
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            // mass only on the identity's own outfits
            let owned = registry.owned(id).unwrap();
            for (k, &w) in q.iter().enumerate() {
                prop_assert!(w >= 0.0);
                if !owned.contains(&clothes[k]) {
                    prop_assert_eq!(w, 0.0);
                }
            }
            let pos = positive_weights(&registry, id, c, &cfg).unwrap();
            let true_w = pos.iter().find(|(k, _)| *k == c).unwrap().1;
            prop_assert!(pos.iter().all(|&(_, w)| w <= true_w + 1e-15));
        }
    }

    #[test]
    fn protocols_partition_general_positives(
        query in labels_strategy(1..=1),
        gallery in labels_strategy(0..=25),
    ) {
        let q = &query[0];
        let [g, cc, sc] = [Mode::General, Mode::ClothesChanging, Mode::SameClothes]
            .map(|m| build_gallery_mask(q, &gallery, Protocol::new(m)));
        for (j, gj) in gallery.iter().enumerate() {
            prop_assert_eq!(cc.positive[j] || sc.positive[j], g.positive[j]);
            prop_assert!(!(cc.positive[j] && sc.positive[j]));
            prop_assert!(!g.positive[j] || g.valid[j]);
            if gj.identity != q.identity {
                prop_assert!(g.valid[j] && cc.valid[j] && sc.valid[j]);
            }
        }
    }

    #[test]
    fn metrics_invariant_under_gallery_reindexing(
        queries in labels_strategy(1..=4),
        gallery in labels_strategy(1..=15),
        seed in any::<u64>(),
        perm_seed in any::<u64>(),
    ) {
        let sim = distinct_sims(queries.len(), gallery.len(), seed);
        let n = gallery.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = perm_seed | 1;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted_gallery: Vec<SampleLabels> = perm.iter().map(|&j| gallery[j]).collect();
        let mut permuted = Matrix::zeros(queries.len(), n);
        for i in 0..queries.len() {
            for (new, &old) in perm.iter().enumerate() {
                permuted.set(i, new, sim.get(i, old));
            }
        }
        for mode in Mode::ALL {
            let p = Protocol::new(mode);
            match (score_similarities(&sim, &queries, &gallery, p), score_similarities(&permuted, &queries, &permuted_gallery, p)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a.cmc, &b.cmc);
                    prop_assert!((a.map - b.map).abs() <= 1e-15);
                    prop_assert_eq!(a.skipped, b.skipped);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "one side scored and the other did not"),
            }
        }
    }

    #[test]
    fn metrics_invariant_under_monotone_transform(
        queries in labels_strategy(1..=4),
        gallery in labels_strategy(1..=15),
        seed in any::<u64>(),
    ) {
        let sim = distinct_sims(queries.len(), gallery.len(), seed);
        let data: Vec<f64> = sim.as_slice().iter().map(|&x| x * x * x + 2.0 * x).collect();
        let transformed = Matrix::new(sim.rows(), sim.cols(), data).unwrap();
        for mode in Mode::ALL {
            let p = Protocol::new(mode);
            match (score_similarities(&sim, &queries, &gallery, p), score_similarities(&transformed, &queries, &gallery, p)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "one side scored and the other did not"),
            }
        }
    }

    #[test]
    fn metrics_lie_in_unit_interval(
        queries in labels_strategy(1..=4),
        gallery in labels_strategy(1..=15),
        seed in any::<u64>(),
    ) {
        let sim = distinct_sims(queries.len(), gallery.len(), seed);
        for mode in Mode::ALL {
            if let Ok(r) = score_similarities(&sim, &queries, &gallery, Protocol::new(mode)) {
                prop_assert!((0.0..=1.0).contains(&r.map));
                prop_assert!(r.cmc.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(r.cmc.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert_eq!(*r.cmc.last().unwrap(), 1.0);
                prop_assert_eq!(r.scored + r.skipped, queries.len());
            }
        }
    }

    #[test]
    fn convergence_masses_reassemble(
        counts in prop::collection::vec(1usize..4, 2..5),
        raw in prop::collection::vec(-3.0f64..3.0, 64),
        inv_tau in 1.0f64..32.0,
    ) {
        let registry = ClothesRegistry::from_pairs(registry_pairs(&counts)).unwrap();
        let nc = registry.num_clothes();
        let d = 3;
        let mut vals = raw.iter().cycle().copied();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| vals.next().unwrap() + 0.01).collect() };
        let head = CosineClassifierHead::new(Matrix::new(nc, d, draw(nc * d)).unwrap(), 1.0 / inv_tau).unwrap();
        let clothes: Vec<usize> = (0..nc).collect();
        let identities: Vec<u32> = clothes.iter().map(|&c| registry.owner(c as u32).unwrap()).collect();
        let features = Matrix::new(nc, d, draw(nc * d)).unwrap();
        prop_assume!(features.row_iter().all(|r| r.iter().any(|&v| v != 0.0)));
        let stats = convergence_stats(&features, &identities, &clothes, &head, &registry).unwrap();
        for (s, &id) in stats.samples.iter().zip(&identities) {
            prop_assert!((s.mass.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert_eq!(s.p_ppos.is_some(), registry.num_owned(id).unwrap() > 1);
            for p in [Some(s.p_pos), s.p_ppos, s.p_neg].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
        let [hp, _, hn] = stats.histograms();
        prop_assert_eq!(hp.total(), nc);
        prop_assert_eq!(hn.total(), nc);
    }

    #[test]
    fn pk_batches_have_p_identities_of_q_samples(
        counts in prop::collection::vec(1usize..7, 2..9),
        p in 1usize..4,
        q in 1usize..5,
        seed in any::<u64>(),
    ) {
        prop_assume!(p <= counts.len());
        let identities: Vec<u32> = counts
            .iter()
            .enumerate()
            .flat_map(|(id, &k)| std::iter::repeat_n(id as u32, k))
            .collect();
        let mut sampler = PkSampler::new(&identities, seed);
        for _ in 0..3 {
            let batch = sampler.next_batch(p, q).unwrap();
            prop_assert_eq!(batch.indices.len(), p * q);
            let chosen: BTreeSet<u32> = batch.indices.iter().map(|&i| identities[i]).collect();
            prop_assert_eq!(chosen.len(), p);
            for id in &chosen {
                let n = batch.indices.iter().filter(|&&i| identities[i] == *id).count();
                prop_assert_eq!(n, q);
                // every available sample is used before any repeats
                let distinct: BTreeSet<usize> =
                    batch.indices.iter().copied().filter(|&i| identities[i] == *id).collect();
                prop_assert_eq!(distinct.len(), q.min(counts[*id as usize]));
            }
        }
    }
}
