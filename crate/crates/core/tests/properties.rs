use facepress_core::analysis::{
    aggregate, curve_area, curve_distance_real, normalize_curves, NormalizationScope, RawRetention,
    ScoreCurve, ScoreSample, XAxis,
};
use facepress_core::budget::{search_budget, ByteBudget, CodecId, SearchMode};
use facepress_core::dataset::{DatasetManifest, ImageRecord, Variant};
use facepress_core::fiqa::{box_blur_3x3, sharpness1, sharpness2, to_gray};
use facepress_core::geometry::{crop_portrait, Landmarks, Point, PortraitGeometry};
use facepress_core::resample::bilinear_resize;
use facepress_core::trials::{
    cosine_similarity, generate_mated_other, generate_mated_self, generate_non_mated, TrialPair,
};
use facepress_core::ImagePlane;
use proptest::prelude::*;

fn image_strategy(max_side: u32) -> impl Strategy<Value = ImagePlane> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), (w * h * 3) as usize)
            .prop_map(move |s| ImagePlane::new(w, h, s).unwrap())
    })
}

fn manifest_strategy() -> impl Strategy<Value = DatasetManifest> {
    proptest::collection::vec(1usize..5, 1..8).prop_map(|sizes| {
        let mut records = Vec::new();
        for (s, n) in sizes.iter().enumerate() {
            for k in 0..*n {
                records.push(ImageRecord {
                    image_id: format!("{s:02}-{k}"),
                    subject_id: format!("subj{s}"),
                    capture_id: format!("cap{k}"),
                    path: String::new(),
                    landmarks: None,
                });
            }
        }
        DatasetManifest::new(records, Variant::Roi).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn resize_preserves_constant_images(
        w in 1u32..20, h in 1u32..20, ow in 1u32..40, oh in 1u32..40, rgb in any::<[u8; 3]>()
    ) {
        let img = ImagePlane::filled(w, h, rgb).unwrap();
        prop_assert_eq!(bilinear_resize(&img, ow, oh).unwrap(), ImagePlane::filled(ow, oh, rgb).unwrap());
    }

    #[test]
    fn portrait_dims_and_fill_follow_geometry(
        cx in -20.0f64..120.0, cy in -20.0f64..120.0, ied in 2.0f64..30.0, emd in 2.0f64..30.0,
        wr in 0.5f64..5.0, hr in 0.5f64..5.0,
    ) {
        let lm = Landmarks::new([
            Point::new(cx - ied / 2.0, cy),
            Point::new(cx + ied / 2.0, cy),
            Point::new(cx, cy + emd / 2.0),
            Point::new(cx - 3.0, cy + emd),
            Point::new(cx + 3.0, cy + emd),
        ]).unwrap();
        let g = PortraitGeometry { width_per_ied: wr, height_per_emd: hr, fill: [0, 0, 0], ..Default::default() };
        // Source never contains pure black, so black marks fill exactly.
        let src = ImagePlane::from_fn(100, 100, |x, y| [1 + (x % 200) as u8, 1 + (y % 200) as u8, 7]).unwrap();
        let out = crop_portrait(&src, &lm, &g).unwrap();
        let ew = (wr * ied).round();
        let eh = (hr * emd).round();
        prop_assert_eq!(out.dims(), (ew as u32, eh as u32));
        let (left, top, _, _) = g.crop_rect(&lm).unwrap();
        for y in 0..out.height() {
            for x in 0..out.width() {
                let sx = left + x as i64;
                let sy = top + y as i64;
                let inside = (0..100).contains(&sx) && (0..100).contains(&sy);
                prop_assert_eq!(out.pixel(x, y) == [0, 0, 0], !inside);
            }
        }
    }

    #[test]
    fn sharpness_bounds_and_mirror_invariance(img in image_strategy(12)) {
        let s1 = sharpness1(&img);
        let s2 = sharpness2(&img);
        prop_assert!((0.0..=1.0).contains(&s1));
        prop_assert!((0.0..=1.0).contains(&s2));
        prop_assert_eq!(sharpness1(&img.mirrored_horizontally()), s1);
        prop_assert_eq!(sharpness1(&img.mirrored_vertically()), s1);
        prop_assert_eq!(sharpness2(&img.mirrored_horizontally()), s2);
        prop_assert_eq!(sharpness2(&img.mirrored_vertically()), s2);
        prop_assert_eq!(sharpness2(&img.inverted()), s2);
    }

    #[test]
    fn sharpness2_zero_iff_blur_is_identity(img in image_strategy(6), flat in any::<bool>()) {
        let img = if flat { ImagePlane::filled(img.width(), img.height(), img.pixel(0, 0)).unwrap() } else { img };
        let g = to_gray(&img);
        let b = box_blur_3x3(&g);
        let unchanged = g.values().iter().zip(b.values()).all(|(a, b)| (a - b).abs() < 1e-12);
        prop_assert_eq!(sharpness2(&img) == 0.0, unchanged);
    }

    #[test]
    fn cosine_symmetric_and_scale_invariant(
        a in proptest::collection::vec(-10.0f64..10.0, 8),
        b in proptest::collection::vec(-10.0f64..10.0, 8),
        lambda in 0.01f64..100.0,
    ) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        let scaled: Vec<f64> = a.iter().map(|v| v * lambda).collect();
        prop_assert_eq!(ab, ba);
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn trial_counts_match_enumeration(m in manifest_strategy(), seed in any::<u64>()) {
        let recs = m.records();
        let mut brute = 0usize;
        for i in 0..recs.len() {
            for j in 0..recs.len() {
                if i < j && recs[i].subject_id == recs[j].subject_id {
                    brute += 1;
                }
            }
        }
        let mo = generate_mated_other(&m);
        prop_assert_eq!(mo.len(), brute);
        prop_assert_eq!(generate_mated_self(&m).len(), recs.len());

        let mut reversed = recs.to_vec();
        reversed.reverse();
        let rm = DatasetManifest::new(reversed, Variant::Roi).unwrap();
        prop_assert_eq!(&generate_mated_other(&rm), &mo);
        if m.subject_count() >= 2 {
            let a = generate_non_mated(&m, 1, seed).unwrap();
            let b = generate_non_mated(&rm, 1, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn non_mated_pairs_cross_subjects_without_duplicates(m in manifest_strategy(), seed in any::<u64>(), frac in 0.0f64..1.0) {
        prop_assume!(m.subject_count() >= 2);
        let total = facepress_core::trials::cross_subject_pair_count(&m) as usize;
        let count = 1 + ((total - 1) as f64 * frac) as usize;
        let t = generate_non_mated(&m, count, seed).unwrap();
        prop_assert_eq!(t.len(), count);
        let mut seen = std::collections::BTreeSet::new();
        for TrialPair { probe_id, reference_id, .. } in &t.pairs {
            prop_assert!(seen.insert((probe_id.clone(), reference_id.clone())));
            prop_assert_ne!(&m.get(probe_id).unwrap().subject_id, &m.get(reference_id).unwrap().subject_id);
        }
        prop_assert_eq!(generate_non_mated(&m, count, seed).unwrap(), t);
    }

    #[test]
    fn normalization_bounds_and_idempotence(values in proptest::collection::vec(-5.0f64..5.0, 2..8)) {
        let pts: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, &v)| (10_000 - 1000 * i as u64, v)).collect();
        let c = ScoreCurve::new(CodecId::Jpeg, "m", pts).unwrap();
        let n = normalize_curves(&[c], NormalizationScope::PerCurve);
        prop_assert!(n[0].points.iter().all(|p| (0.0..=1.0).contains(&p.1)));
        let area = curve_area(&n[0], XAxis::TargetBytes).unwrap();
        prop_assert!((0.0..=1.0).contains(&area));
        let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        if hi - lo > 1e-9 {
            let again = normalize_curves(&n, NormalizationScope::PerCurve);
            for (a, b) in again[0].points.iter().zip(&n[0].points) {
                prop_assert!((a.1 - b.1).abs() < 1e-12);
            }
        }
        prop_assert_eq!(curve_distance_real(&n[0], &n[0], XAxis::TargetBytes).unwrap(), 0.0);
    }

    #[test]
    fn distance_symmetric_and_affine_invariant(
        q in proptest::collection::vec(0.0f64..1.0, 4),
        c in proptest::collection::vec(0.0f64..1.0, 4),
        scale in 0.1f64..10.0,
        offset in -5.0f64..5.0,
    ) {
        let curve = |m: &str, v: &[f64]| ScoreCurve::new(
            CodecId::JpegXl, m,
            v.iter().enumerate().map(|(i, &y)| (5000 - 900 * i as u64, y)).collect(),
        ).unwrap();
        let raw = [curve("q", &q), curve("c", &c)];
        let n = normalize_curves(&raw, NormalizationScope::PerMethodGlobal);
        let d1 = curve_distance_real(&n[0], &n[1], XAxis::TargetBytes).unwrap();
        let d2 = curve_distance_real(&n[1], &n[0], XAxis::TargetBytes).unwrap();
        prop_assert_eq!(d1, d2);
        let shifted: Vec<f64> = q.iter().map(|v| v * scale + offset).collect();
        let n2 = normalize_curves(&[curve("q", &shifted), curve("c", &c)], NormalizationScope::PerMethodGlobal);
        let d3 = curve_distance_real(&n2[0], &n2[1], XAxis::TargetBytes).unwrap();
        prop_assert!((d1 - d3).abs() < 1e-9);
    }

    #[test]
    fn aggregate_is_permutation_invariant(values in proptest::collection::vec(-1.0f64..1.0, 1..40), rot in 0usize..40) {
        let samples: Vec<ScoreSample> = values.iter().enumerate().map(|(i, &v)| ScoreSample {
            method: format!("m{}", i % 3),
            codec: CodecId::ALL[i % 4],
            target_bytes: 2200 + 100 * (i % 2) as u64,
            value: v,
        }).collect();
        let mut rotated = samples.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        rotated.reverse();
        let a = aggregate(&samples, RawRetention::All);
        prop_assert_eq!(&a, &aggregate(&rotated, RawRetention::All));
        for s in &a {
            prop_assert!(s.min <= s.mean && s.mean <= s.max && s.n >= 1);
        }
    }

    #[test]
    fn bisection_equals_exhaustive_on_monotone_sizes(
        steps in proptest::collection::vec(0usize..40, 1..300),
        base in 1usize..100,
        budget in 1u64..6000,
    ) {
        let sizes: Vec<usize> = steps.iter().scan(base, |acc, s| { *acc += s; Some(*acc) }).collect();
        let probe = |i: usize| Ok::<_, ()>(vec![0u8; sizes[i]]);
        let b = ByteBudget::new(budget).unwrap();
        let fast = search_budget(sizes.len(), b, SearchMode::Bisection, probe).map(|s| s.index).ok();
        let slow = search_budget(sizes.len(), b, SearchMode::Exhaustive, probe).map(|s| s.index).ok();
        prop_assert_eq!(fast, slow);
        if let Some(i) = fast {
            prop_assert!(sizes[i] as u64 <= budget);
            if i + 1 < sizes.len() {
                prop_assert!(sizes[i + 1] as u64 > budget);
            }
        }
    }

    #[test]
    fn bisection_respects_budget_on_noisy_sizes(
        jitter in proptest::collection::vec(-15i64..15, 2..200),
        budget in 50u64..3000,
    ) {
        let sizes: Vec<usize> = jitter.iter().enumerate().map(|(i, j)| (40 + 12 * i as i64 + j) as usize).collect();
        let probe = |i: usize| Ok::<_, ()>(vec![0u8; sizes[i]]);
        if let Ok(sel) = search_budget(sizes.len(), ByteBudget::new(budget).unwrap(), SearchMode::Bisection, probe) {
            prop_assert!(sel.payload.len() as u64 <= budget);
            prop_assert_eq!(sel.payload.len(), sizes[sel.index]);
        }
    }
}
