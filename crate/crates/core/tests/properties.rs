use image::{Rgb, RgbImage};
use partgroup::evaluation::{evaluate, GtInstance, IouKind, Prediction};
use partgroup::features::{roi_align, FeaturePyramid, PyramidLevel, RoiAlignConfig};
use partgroup::grouping::{cluster, merge_groups, pairwise_affinity, partition_objective, AffinityMatrix};
use partgroup::proposals::{graph_segment, selective_search_hierarchy, SegParams, SimilarityWeights};
use partgroup::ranking::{rank, OverlapKind, RankConfig};
use partgroup::supervision::{augment_labels, AugmentationConfig};
use partgroup::{box_iou, mask_iou, mask_union, BBox, BinaryMask, LabelSet, Proposal, Provenance, ScoreParts};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn dense_mask(h: u32, w: u32) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), (h * w) as usize)
        .prop_map(move |d| BinaryMask::from_dense(h, w, &d).unwrap())
}

fn sparse_mask(h: u32, w: u32, p: f64) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(proptest::bool::weighted(p), (h * w) as usize)
        .prop_map(move |d| BinaryMask::from_dense(h, w, &d).unwrap())
}

fn any_mask() -> impl Strategy<Value = BinaryMask> {
    (1u32..14, 1u32..14).prop_flat_map(|(h, w)| dense_mask(h, w))
}

fn any_box() -> impl Strategy<Value = BBox> {
    (0.0..50.0f64, 0.0..50.0f64, 0.5..30.0f64, 0.5..30.0f64).prop_map(|(x, y, w, h)| BBox::from_xywh([x, y, w, h]).unwrap())
}

fn rect_proposal(h: u32, w: u32, x1: u32, y1: u32, x2: u32, y2: u32) -> Proposal {
    let rect = partgroup::PixelRect { x1, y1, x2, y2 };
    Proposal::from_mask(BinaryMask::from_rect(h, w, rect), Provenance::Unsupervised).unwrap()
}

/// Random rectangles inside a 16x16 frame.
fn proposals(max: usize) -> impl Strategy<Value = Vec<Proposal>> {
    proptest::collection::vec((0u32..15, 0u32..15, 1u32..8, 1u32..8, 0.05..1.0f64, 0.05..1.0f64), 0..max).prop_map(
        |v| {
            v.into_iter()
                .map(|(x, y, w, h, c, b)| {
                    rect_proposal(16, 16, x, y, (x + w).min(16), (y + h).min(16)).with_scores(ScoreParts { c, b, m: 1.0 })
                })
                .collect()
        },
    )
}

fn label_set(max: usize, p: f64) -> impl Strategy<Value = LabelSet> {
    proptest::collection::vec(sparse_mask(8, 8, p), 0..max).prop_map(|ms| {
        LabelSet::new(
            ms.into_iter()
                .filter_map(|m| Proposal::from_mask(m, Provenance::Unsupervised))
                .collect(),
        )
    })
}

fn affinity_matrix(n: usize) -> impl Strategy<Value = AffinityMatrix> {
    proptest::collection::vec(0.0..1.0f64, n * n).prop_map(move |v| {
        let mut a = AffinityMatrix::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                a.set_symmetric(i, j, v[i * n + j]);
            }
        }
        a
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rle_round_trip(m in any_mask()) {
        let counts = m.counts().to_vec();
        let (h, w) = m.dims();
        prop_assert_eq!(counts.iter().map(|&c| c as u64).sum::<u64>(), h as u64 * w as u64);
        let back = BinaryMask::from_counts(h, w, &counts).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(BinaryMask::from_dense(h, w, &m.to_dense()).unwrap(), m.clone());
        prop_assert_eq!(BinaryMask::from_compressed(h, w, &m.to_compressed()).unwrap(), m);
    }

    #[test]
    fn mask_iou_symmetric_and_reflexive((a, b) in (1u32..10, 1u32..10).prop_flat_map(|(h, w)| (dense_mask(h, w), dense_mask(h, w)))) {
        prop_assert_eq!(mask_iou(&a, &b).unwrap(), mask_iou(&b, &a).unwrap());
        let (h, w) = a.dims();
        if !a.is_empty() {
            prop_assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        }
        prop_assert_eq!(mask_iou(&a, &BinaryMask::empty(h, w)).unwrap(), 0.0);
        // pixel-count oracle
        let (da, db) = (a.to_dense(), b.to_dense());
        let inter = da.iter().zip(&db).filter(|(x, y)| **x && **y).count();
        let uni = da.iter().zip(&db).filter(|(x, y)| **x || **y).count();
        let expect = if uni == 0 { 0.0 } else { inter as f64 / uni as f64 };
        prop_assert_eq!(mask_iou(&a, &b).unwrap(), expect);
    }

    #[test]
    fn box_iou_symmetric(a in any_box(), b in any_box()) {
        prop_assert_eq!(box_iou(&a, &b), box_iou(&b, &a));
        prop_assert!((box_iou(&a, &a) - 1.0).abs() < 1e-12);
        let v = box_iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn union_laws((a, b, c) in (1u32..10, 1u32..10).prop_flat_map(|(h, w)| (dense_mask(h, w), dense_mask(h, w), dense_mask(h, w)))) {
        let ab_c = mask_union([&mask_union([&a, &b]).unwrap(), &c]).unwrap();
        let a_bc = mask_union([&a, &mask_union([&b, &c]).unwrap()]).unwrap();
        prop_assert_eq!(&ab_c, &a_bc);
        prop_assert_eq!(mask_union([&a, &b]).unwrap(), mask_union([&b, &a]).unwrap());
        prop_assert_eq!(mask_union([&a, &a]).unwrap(), a.clone());
        let expected = match (a.tight_rect(), b.tight_rect()) {
            (Some(x), Some(y)) => Some(x.union(y)),
            (x, y) => x.or(y),
        };
        prop_assert_eq!(mask_union([&a, &b]).unwrap().tight_rect(), expected);
    }

    #[test]
    fn augmentation_rule(gt in label_set(4, 0.4), unsup in label_set(6, 0.4), t1 in 0.0..1.0f64, t2 in 0.0..1.0f64) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a_lo = augment_labels(&gt, &unsup, &AugmentationConfig { iou_exclude_threshold: lo }).unwrap();
        let a_hi = augment_labels(&gt, &unsup, &AugmentationConfig { iou_exclude_threshold: hi }).unwrap();
        // every ground-truth label survives, in order, at the front
        prop_assert_eq!(&a_lo.entries[..gt.len()], &gt.entries[..]);
        // kept unsupervised entries: max IoU with any label <= threshold
        let excluded = unsup
            .iter()
            .filter(|u| gt.iter().any(|s| mask_iou(&s.mask, &u.mask).unwrap() > lo))
            .count();
        prop_assert_eq!(a_lo.len(), gt.len() + unsup.len() - excluded);
        prop_assert!(a_hi.len() >= a_lo.len());
        if gt.is_empty() {
            prop_assert_eq!(&a_lo.entries, &unsup.entries);
        }
        let empty = LabelSet::new(Vec::new());
        prop_assert_eq!(augment_labels(&gt, &empty, &AugmentationConfig::default()).unwrap().entries, gt.entries.clone());
    }

    #[test]
    fn affinity_is_symmetric_with_unit_diagonal(vs in proptest::collection::vec(proptest::collection::vec(0.01..1.0f64, 5), 1..8)) {
        let features: Vec<_> = vs.into_iter().map(|values| partgroup::features::FeatureVector { values }).collect();
        let a = pairwise_affinity(&features).unwrap();
        for i in 0..a.len() {
            prop_assert!((a.get(i, i) - 1.0).abs() < 1e-12);
            for j in 0..a.len() {
                prop_assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
    }

    #[test]
    fn clustering_properties((a, tau) in (1usize..12).prop_flat_map(|n| (affinity_matrix(n), 0.0..1.0f64))) {
        let c = cluster(&a, tau).unwrap();
        prop_assert_eq!(&cluster(&a, tau).unwrap().groups, &c.groups);
        prop_assert!(c.merge_values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let n = a.len();
        let mut seen: Vec<usize> = c.groups.iter().flatten().copied().collect();
        seen.sort();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let obj = partition_objective(&a, tau, &c.groups);
        let singles: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let whole = vec![(0..n).collect::<Vec<_>>()];
        prop_assert!(obj >= partition_objective(&a, tau, &singles) - 1e-9);
        prop_assert!(obj >= partition_objective(&a, tau, &whole) - 1e-9);
    }

    #[test]
    fn merged_masks_cover_members(parts in proposals(8).prop_filter("nonempty", |p| !p.is_empty()), split in 1usize..4) {
        let n = parts.len();
        let groups: Vec<Vec<usize>> = (0..split.min(n))
            .map(|g| (0..n).filter(|i| i % split.min(n) == g).collect())
            .collect();
        let merged = merge_groups(&parts, &groups, false).unwrap();
        prop_assert_eq!(merged.len(), groups.len());
        for (g, m) in groups.iter().zip(&merged) {
            for &i in g {
                prop_assert!(m.mask.area() >= parts[i].mask.area());
                let r = m.mask.tight_rect().unwrap();
                let pr = parts[i].mask.tight_rect().unwrap();
                prop_assert!(r.x1 <= pr.x1 && r.y1 <= pr.y1 && r.x2 >= pr.x2 && r.y2 >= pr.y2);
            }
        }
    }

    #[test]
    fn ranking_invariants(parts in proposals(20), top_k in 1usize..12, seed in any::<u64>(), factor in 0.1..1.0f64) {
        let cfg = RankConfig { top_k, dedup_iou: 0.5, dedup_kind: OverlapKind::Mask };
        let out = rank(&parts, &cfg).unwrap();
        prop_assert!(out.len() <= top_k);
        prop_assert!(out.windows(2).all(|w| w[0].score >= w[1].score));

        // permutation of the input leaves the result unchanged
        use rand::{seq::SliceRandom, SeedableRng};
        let mut shuffled = parts.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let again = rank(&shuffled, &cfg).unwrap();
        let key = |v: &[partgroup::ranking::Scored]| v.iter().map(|s| (s.proposal.mask.clone(), s.score.to_bits())).collect::<Vec<_>>();
        prop_assert_eq!(key(&out), key(&again));

        // a common positive scale on c, b and m keeps the order
        let scaled: Vec<Proposal> = parts.iter().map(|p| {
            let s = p.scores;
            p.clone().with_scores(ScoreParts { c: s.c * factor, b: s.b * factor, m: s.m * factor })
        }).collect();
        let masks = |v: &[partgroup::ranking::Scored]| v.iter().map(|s| s.proposal.mask.clone()).collect::<Vec<_>>();
        prop_assert_eq!(masks(&out), masks(&rank(&scaled, &cfg).unwrap()));
    }

    #[test]
    fn ar_invariants(gts in proptest::collection::vec(proposals(6).prop_filter("nonempty", |g| !g.is_empty()), 1..4), preds in proptest::collection::vec(proposals(12), 1..4)) {
        let mut gt = BTreeMap::new();
        let mut pr = BTreeMap::new();
        for (i, g) in gts.iter().enumerate() {
            gt.insert(i as u64, g.iter().map(|p| GtInstance { bbox: p.bbox, mask: Some(p.mask.clone()), ignore: false }).collect::<Vec<_>>());
        }
        for (i, p) in preds.iter().enumerate().take(gts.len()) {
            let n = p.len();
            pr.insert(i as u64, p.iter().enumerate().map(|(r, q)| Prediction {
                bbox: q.bbox, mask: Some(q.mask.clone()), score: (n - r) as f64,
            }).collect::<Vec<_>>());
        }
        let kinds = [IouKind::Box, IouKind::Mask];
        for kind in kinds {
            let rep = evaluate(&gt, &pr, &[3, 6, 12], kind).unwrap();
            prop_assert!(rep.ar[&3] <= rep.ar[&6] && rep.ar[&6] <= rep.ar[&12]);

            // a prediction appended below rank 3 leaves AR@3 alone
            let mut appended = pr.clone();
            for list in appended.values_mut() {
                if list.len() >= 3 {
                    let last = list.last().unwrap().clone();
                    list.push(Prediction { score: last.score - 1.0, ..gt[&0][0].clone().into_prediction() });
                }
            }
            prop_assert_eq!(evaluate(&gt, &appended, &[3], kind).unwrap().ar[&3], rep.ar[&3]);

            // a perfect prediction on top never lowers AR
            let mut boosted = pr.clone();
            let target = &gt[&0][0];
            let top = boosted.get(&0).and_then(|l| l.first()).map_or(1.0, |p| p.score + 1.0);
            boosted.entry(0).or_default().insert(0, Prediction { score: top, ..target.clone().into_prediction() });
            let after = evaluate(&gt, &boosted, &[12], kind).unwrap().ar[&12];
            prop_assert!(after + 1e-12 >= evaluate(&gt, &pr, &[11], kind).unwrap().ar[&11]);
        }
    }
}

trait IntoPrediction {
    fn into_prediction(self) -> Prediction;
}

impl IntoPrediction for GtInstance {
    fn into_prediction(self) -> Prediction {
        Prediction {
            bbox: self.bbox,
            mask: self.mask,
            score: 0.0,
        }
    }
}

fn textured(w: u32, h: u32, seed: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let v = |k: u32| ((x / 5 * 31 + y / 4 * 17 + seed * 13 + k * 7) % 5 * 50) as u8;
        Rgb([v(0), v(1), v(2)])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn graph_segment_partitions(seed in 0u32..50, k in 1.0..300.0f64, min_size in 1usize..30) {
        let img = textured(24, 18, seed);
        let p = SegParams { scale_k: k, sigma: 0.5, min_size };
        let map = graph_segment(&img, &p);
        prop_assert_eq!(map.labels.len(), 24 * 18);
        let sizes = map.sizes();
        prop_assert_eq!(sizes.len(), map.count);
        prop_assert_eq!(sizes.iter().sum::<usize>(), 24 * 18);
        prop_assert!(map.labels.iter().all(|&l| (l as usize) < map.count));
        if map.count > 1 {
            prop_assert!(sizes.iter().all(|&s| s >= min_size));
        }
    }

    #[test]
    fn smaller_k_never_fewer_regions(seed in 0u32..50) {
        let img = textured(24, 18, seed);
        let counts: Vec<usize> = [400.0, 200.0, 100.0, 50.0, 25.0, 10.0]
            .iter()
            .map(|&k| graph_segment(&img, &SegParams { scale_k: k, sigma: 0.0, min_size: 1 }).count)
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{:?}", counts);
    }

    #[test]
    fn hierarchy_nodes_are_unions(seed in 0u32..50) {
        let img = textured(20, 16, seed);
        let hier = selective_search_hierarchy(&img, &SegParams { scale_k: 30.0, sigma: 0.0, min_size: 4 }, &SimilarityWeights::default()).unwrap();
        let n = hier.base.count;
        prop_assert_eq!(hier.nodes.len(), 2 * n - 1);
        for node in &hier.nodes {
            prop_assert!(!node.mask.is_empty());
            prop_assert_eq!(node.mask.dims(), (16, 20));
            if let Some((a, b)) = node.children {
                let u = mask_union([&hier.nodes[a].mask, &hier.nodes[b].mask]).unwrap();
                prop_assert_eq!(&u, &node.mask);
                prop_assert_eq!(hier.nodes[a].mask.intersection_area(&hier.nodes[b].mask).unwrap(), 0);
            }
        }
    }

    #[test]
    fn roi_align_translation_invariant(dx in 0usize..8, dy in 0usize..8, bx in 2.0..10.0f64, by in 2.0..10.0f64, bw in 2.0..12.0f64, bh in 2.0..12.0f64) {
        let (h, w) = (32usize, 32usize);
        let f = |x: f64, y: f64, c: usize| ((x * 0.37 + c as f64).sin() * (y * 0.21).cos()) as f32;
        let level = |ox: usize, oy: usize| PyramidLevel {
            stride: 1,
            channels: 2,
            height: h,
            width: w,
            data: (0..2).flat_map(|c| (0..h).flat_map(move |y| (0..w).map(move |x| f(x as f64 - ox as f64, y as f64 - oy as f64, c)))).collect(),
        };
        let p0 = FeaturePyramid::new(h as u32, w as u32, vec![level(0, 0)]).unwrap();
        let p1 = FeaturePyramid::new(h as u32, w as u32, vec![level(dx, dy)]).unwrap();
        let cfg = RoiAlignConfig::default();
        let b0 = BBox::from_xywh([bx, by, bw, bh]).unwrap();
        let b1 = BBox::from_xywh([bx + dx as f64, by + dy as f64, bw, bh]).unwrap();
        let v0 = roi_align(&p0, &b0, &cfg).unwrap();
        let v1 = roi_align(&p1, &b1, &cfg).unwrap();
        prop_assert_eq!(v0.dim(), 2 * 49);
        for (a, b) in v0.values.iter().zip(&v1.values) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        let level0 = &p0.levels()[0];
        for c in 0..2 {
            let (lo, hi) = level0.channel_range(c);
            for v in &v0.values[c * 49..(c + 1) * 49] {
                prop_assert!(*v >= lo as f64 - 1e-9 && *v <= hi as f64 + 1e-9);
            }
        }
    }
}
