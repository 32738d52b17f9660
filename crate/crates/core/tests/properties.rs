//! Cross-module properties, checked on random inputs.

use std::collections::HashSet;

use framescope_core::dataio::{generate_synthetic, split, Dataset, SplitCounts, SynthSpec};
use framescope_core::geometry::{estimate_homography, warp, Homography, Point, QuadCorrespondence};
use framescope_core::image::resize;
use framescope_core::ipt::{
    classic_shadow_removal_raw, color_neutralize, contrast_enhance, gray_world, intensity_neutralize_raw, MsrParams, WhitePoint, WhiteSource,
};
use framescope_core::metrics::improvement_pct;
use framescope_core::segnet::{build_model, loss_ce, softmax, SegConfig, Tensor};
use framescope_core::strategy::apply_stage;
use framescope_core::sweep::{impact_table, ClassScores, SweepReport, StrategyResult};
use framescope_core::{apply_strategy, resize_canonical, ClassId, ImageBuffer, MaskSet, StageId, StageParams, Strategy};
use proptest::prelude::*;
use proptest::sample::subsequence;
use proptest::strategy::Strategy as _;

fn arb_image(min: usize, max: usize, lo: f64) -> impl proptest::strategy::Strategy<Value = ImageBuffer> {
    (min..=max, min..=max).prop_flat_map(move |(w, h)| {
        prop::collection::vec(lo..=1.0f64, w * h * 3).prop_map(move |data| ImageBuffer::new(w, h, data).unwrap())
    })
}

fn arb_stages() -> impl proptest::strategy::Strategy<Value = Vec<StageId>> {
    subsequence(StageId::ALL.to_vec(), 0..=4).prop_shuffle()
}

fn chromaticity(px: &[f64]) -> [f64; 3] {
    let s = px[0] + px[1] + px[2];
    [px[0] / s, px[1] / s, px[2] / s]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splitting_a_strategy_composes(img in arb_image(6, 14, 0.0), stages in arb_stages(), cut in 0usize..=4) {
        let cut = cut.min(stages.len());
        let params = StageParams::default();
        let whole = Strategy::new(stages.clone(), params.clone()).unwrap();
        let prefix = Strategy::new(stages[..cut].to_vec(), params.clone()).unwrap();
        let suffix = Strategy::new(stages[cut..].to_vec(), params).unwrap();
        let direct = apply_strategy(&whole, &img, "x");
        let staged = apply_strategy(&prefix, &img, "x").and_then(|mid| apply_strategy(&suffix, &mid, "x"));
        match (direct, staged) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "outcomes differ: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn stages_keep_shape_and_range_and_are_pure(img in arb_image(4, 16, 0.02)) {
        let params = StageParams::default();
        for stage in StageId::ALL {
            let a = apply_stage(stage, &params, &img, "x").unwrap();
            prop_assert!(a.same_dims(&img));
            prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(&a, &apply_stage(stage, &params, &img, "x").unwrap());
        }
    }

    #[test]
    fn canonical_resize_is_idempotent(img in arb_image(3, 40, 0.0), side in 4usize..48) {
        let once = resize_canonical(&img, side).unwrap();
        prop_assert_eq!(once.width(), side);
        prop_assert_eq!(once.height(), side);
        prop_assert_eq!(&resize_canonical(&once, side).unwrap(), &once);
    }

    #[test]
    fn shadow_removal_and_retinex_keep_chromaticity(img in arb_image(8, 20, 0.0)) {
        let outputs = [
            classic_shadow_removal_raw(&img, 0.25),
            intensity_neutralize_raw(&img, &MsrParams::default()).unwrap(),
        ];
        for raw in outputs {
            for (i, o) in img.data().chunks_exact(3).zip(raw.chunks_exact(3)) {
                if i.iter().sum::<f64>() / 3.0 <= 0.01 || o.iter().sum::<f64>() <= 1e-12 {
                    continue;
                }
                let (ci, co) = (chromaticity(i), chromaticity(o));
                for c in 0..3 {
                    prop_assert!((ci[c] - co[c]).abs() < 1e-3, "{:?} -> {:?}", ci, co);
                }
            }
        }
    }

    #[test]
    fn gray_world_target_is_a_fixed_point(img in arb_image(4, 12, 0.05)) {
        let [r, g, b] = gray_world(&img);
        let target = WhitePoint::new(r, g, b).unwrap();
        let out = color_neutralize(&img, WhiteSource::Auto, target).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn von_kries_matches_hand_oracle(
        img in arb_image(3, 6, 0.0),
        src in prop::array::uniform3(0.3f64..1.5),
        dst in prop::array::uniform3(0.3f64..1.5),
    ) {
        let source = WhitePoint::new(src[0], src[1], src[2]).unwrap();
        let target = WhitePoint::new(dst[0], dst[1], dst[2]).unwrap();
        let out = color_neutralize(&img, WhiteSource::Fixed(source), target).unwrap();
        let m = von_kries_oracle(src, dst);
        for (px, got) in img.data().chunks_exact(3).zip(out.data().chunks_exact(3)) {
            let lin: Vec<f64> = px.iter().map(|&c| decode(c)).collect();
            for r in 0..3 {
                let v = (0..3).map(|k| m[r][k] * lin[k]).sum::<f64>().clamp(0.0, 1.0);
                prop_assert!((encode(v) - got[r]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn equalization_is_idempotent_to_one_level(img in arb_image(2, 24, 0.0)) {
        let once = contrast_enhance(&img);
        let twice = contrast_enhance(&once);
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() <= 1.0 / 255.0 + 1e-12);
        }
    }
}

fn decode(c: f64) -> f64 {
    if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) }
}

fn encode(c: f64) -> f64 {
    if c <= 0.0031308 { 12.92 * c } else { 1.055 * c.powf(1.0 / 2.4) - 0.055 }
}

type M3 = [[f64; 3]; 3];

fn mul(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    o
}

fn inverse(m: &M3) -> M3 {
    let c = |r: usize, k: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
        m[r1][k1] * m[r2][k2] - m[r1][k2] * m[r2][k1]
    };
    let det: f64 = (0..3).map(|k| m[0][k] * c(0, k)).sum();
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = c(j, i) / det;
        }
    }
    o
}

/// `M^-1 diag(M t / M s) M` with `M` = HPE * sRGB->XYZ, built from the
/// published constants without touching the library's matrices.
fn von_kries_oracle(src: [f64; 3], dst: [f64; 3]) -> M3 {
    let srgb = [[0.4124564, 0.3575761, 0.1804375], [0.2126729, 0.7151522, 0.0721750], [0.0193339, 0.1191920, 0.9503041]];
    let hpe = [[0.38971, 0.68898, -0.07868], [-0.22981, 1.18340, 0.04641], [0.0, 0.0, 1.0]];
    let m = mul(&hpe, &srgb);
    let apply = |v: [f64; 3]| -> [f64; 3] { [0, 1, 2].map(|i| (0..3).map(|k| m[i][k] * v[k]).sum()) };
    let (ls, lt) = (apply(src), apply(dst));
    let mut d = [[0.0; 3]; 3];
    for i in 0..3 {
        d[i][i] = lt[i] / ls[i];
    }
    mul(&inverse(&m), &mul(&d, &m))
}

#[test]
fn von_kries_worked_example() {
    // Source (0.9, 1.0, 1.1) -> D65 on a mid-grey pixel.
    let img = ImageBuffer::filled(1, 1, [0.5; 3]);
    let source = WhitePoint::new(0.9, 1.0, 1.1).unwrap();
    let out = color_neutralize(&img, WhiteSource::Fixed(source), WhitePoint::D65).unwrap();
    let m = von_kries_oracle([0.9, 1.0, 1.1], [1.0; 3]);
    let lin = decode(0.5);
    for r in 0..3 {
        let expected = encode((m[r].iter().sum::<f64>() * lin).clamp(0.0, 1.0));
        assert!((out.data()[r] - expected).abs() < 1e-9);
    }
    // Correcting a bluish source lifts red above blue.
    assert!(out.data()[0] > out.data()[2]);
}

fn arb_quad() -> impl proptest::strategy::Strategy<Value = [Point; 4]> {
    // Jittered corners of a box stay convex and non-degenerate.
    (prop::array::uniform8(-0.3f64..0.3), 10.0f64..400.0, -100.0f64..100.0, -100.0f64..100.0).prop_map(|(j, s, ox, oy)| {
        let base = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mut q = [[0.0; 2]; 4];
        for i in 0..4 {
            q[i] = [ox + s * (base[i][0] + j[2 * i]), oy + s * (base[i][1] + j[2 * i + 1])];
        }
        q
    })
}

fn smooth_image(w: usize, h: usize, phase: f64) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        [
            0.5 + 0.3 * (x / 9.0 + phase).sin(),
            0.5 + 0.3 * (y / 11.0 - phase).cos(),
            0.5 + 0.2 * ((x + y) / 13.0).sin(),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn homography_reprojects_its_correspondences(src in arb_quad(), dst in arb_quad()) {
        let h = estimate_homography(&QuadCorrespondence::new(src, dst).unwrap()).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            let p = h.project(*s);
            prop_assert!((p[0] - d[0]).abs() < 1e-9 && (p[1] - d[1]).abs() < 1e-9, "{:?} vs {:?}", p, d);
        }
    }

    #[test]
    fn homographies_compose(a in arb_quad(), b in arb_quad(), c in arb_quad(), p in prop::array::uniform2(0.0f64..300.0)) {
        let h1 = estimate_homography(&QuadCorrespondence::new(a, b).unwrap()).unwrap();
        let h2 = estimate_homography(&QuadCorrespondence::new(b, c).unwrap()).unwrap();
        let both = h2.after(&h1).unwrap();
        let direct = both.project(p);
        let chained = h2.project(h1.project(p));
        let scale = direct[0].abs().max(direct[1].abs()).max(1.0);
        prop_assert!((direct[0] - chained[0]).abs() < 1e-9 * scale && (direct[1] - chained[1]).abs() < 1e-9 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn warp_round_trip_restores_the_interior(j in prop::array::uniform8(-1.5f64..1.5), phase in 0.0f64..6.0) {
        let (w, h) = (40, 32);
        let img = smooth_image(w, h, phase);
        let corners = [[0.0, 0.0], [39.0, 0.0], [39.0, 31.0], [0.0, 31.0]];
        let mut moved = corners;
        for i in 0..4 {
            moved[i] = [corners[i][0] + j[2 * i], corners[i][1] + j[2 * i + 1]];
        }
        let hm = estimate_homography(&QuadCorrespondence::new(corners, moved).unwrap()).unwrap();
        let there = warp(&img, &hm, w, h).unwrap();
        let back = warp(&there, &hm.inverse().unwrap(), w, h).unwrap();
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                let (a, b) = (img.pixel(x, y), back.pixel(x, y));
                for c in 0..3 {
                    prop_assert!((a[c] - b[c]).abs() <= 0.02, "({}, {}) {} vs {}", x, y, a[c], b[c]);
                }
            }
        }
    }

    #[test]
    fn softmax_normalizes_and_loss_is_non_negative(
        logits in prop::collection::vec(-30.0f64..30.0, 6 * 5 * 5),
        labels in prop::collection::vec(0u8..5, 6 * 5),
    ) {
        let t = Tensor { h: 5, w: 6, c: 5, data: logits };
        for px in softmax(&t).data.chunks_exact(5) {
            prop_assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let masks = MaskSet::from_labels(6, 5, &labels).unwrap();
        let loss = loss_ce(&t, &masks).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
    }

    #[test]
    fn predictions_are_disjoint(seed in any::<u64>(), img in arb_image(8, 8, 0.0)) {
        let model = build_model(&SegConfig { input_side: 8, base_channels: 2, depth: 1, seed, ..Default::default() }).unwrap();
        let masks = model.predict(&img).unwrap();
        prop_assert!(masks.is_disjoint());
    }

    #[test]
    fn split_is_disjoint_and_duplicate_free(n in 3usize..30, a in 0usize..30, b in 0usize..30, seed in any::<u64>()) {
        let items = generate_synthetic(&SynthSpec { count: n, side: 32, seed: 3, ..Default::default() }).unwrap();
        let train = a.min(n);
        let val = b.min(n - train);
        let counts = SplitCounts { train, val, test: n - train - val };
        let (tr, va, te) = split(items, counts, seed).unwrap();
        prop_assert_eq!((tr.len(), va.len(), te.len()), (counts.train, counts.val, counts.test));
        let mut seen = HashSet::new();
        for d in [&tr, &va, &te] {
            for item in d.items() {
                prop_assert!(seen.insert(item.id.clone()), "duplicate {}", item.id);
            }
        }
        prop_assert_eq!(seen.len(), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn synthetic_items_satisfy_invariants(seed in any::<u64>(), side in 32usize..72) {
        let ds: Dataset = generate_synthetic(&SynthSpec { count: 3, side, seed, ..Default::default() }).unwrap();
        for item in ds.items() {
            prop_assert_eq!((item.image.width(), item.image.height()), (side, side));
            prop_assert!(item.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!((item.masks.width(), item.masks.height()), (side, side));
            prop_assert!(item.masks.is_disjoint());
            prop_assert!(ClassId::ALL.iter().any(|&c| !item.masks.plane(c).is_empty()));
        }
    }
}

#[test]
fn resize_enlarges_and_shrinks_to_any_shape() {
    let img = smooth_image(10, 7, 0.3);
    for (w, h) in [(20, 14), (5, 3), (10, 7), (1, 1)] {
        let r = resize(&img, w, h).unwrap();
        assert_eq!((r.width(), r.height()), (w, h));
    }
}

#[test]
fn identity_homography_warp_is_exact() {
    let img = smooth_image(12, 9, 1.0);
    assert_eq!(warp(&img, &Homography::identity(), 12, 9).unwrap(), img);
}

const PUBLISHED_IOUS: [(&str, [f64; 4]); 15] = [
    ("", [0.808, 0.764, 0.461, 0.746]),
    ("SR", [0.685, 0.731, 0.428, 0.748]),
    ("CN", [0.735, 0.765, 0.451, 0.754]),
    ("IN", [0.896, 0.785, 0.447, 0.756]),
    ("CE", [0.913, 0.748, 0.497, 0.767]),
    ("SR+CN", [0.874, 0.740, 0.479, 0.784]),
    ("CN+IN", [0.858, 0.808, 0.423, 0.742]),
    ("SR+CE", [0.783, 0.792, 0.467, 0.755]),
    ("CN+CE", [0.797, 0.757, 0.465, 0.767]),
    ("IN+CE", [0.884, 0.743, 0.439, 0.754]),
    ("SR+CN+CE", [0.903, 0.762, 0.488, 0.756]),
    ("SR+IN+CE", [0.678, 0.761, 0.443, 0.710]),
    ("SR+CN+IN", [0.715, 0.771, 0.483, 0.759]),
    ("CN+IN+CE", [0.894, 0.777, 0.417, 0.739]),
    ("SR+CN+IN+CE", [0.840, 0.789, 0.427, 0.736]),
];

fn published_report() -> SweepReport {
    let rows = PUBLISHED_IOUS
        .iter()
        .map(|(code, [bend, dent, scratch, wframe])| StrategyResult {
            strategy: code.to_string(),
            iou: ClassScores { wframe: Some(*wframe), bend: Some(*bend), dent: Some(*dent), scratch: Some(*scratch) },
            val_best: 0.0,
            loss: 0.0,
        })
        .collect();
    SweepReport::assemble("0".repeat(64), rows, Vec::new(), false)
}

#[test]
fn impact_table_on_published_results() {
    let table = impact_table(&published_report()).unwrap();
    let bend = &table["bend"];
    assert_eq!(bend.len(), 14);
    assert_eq!(bend[0].strategy, "CE");
    assert!((bend[0].delta - 0.105).abs() < 1e-12);
    let sr = bend.iter().find(|d| d.strategy == "SR").unwrap();
    assert!((sr.delta + 0.123).abs() < 1e-12);
    assert_eq!(table["scratch"][0].strategy, "CE");
    assert_eq!(table["wframe"][0].strategy, "SR+CN");
    // Deltas sum to the column total minus 14 baselines.
    for (col, key) in ["bend", "dent", "scratch", "wframe"].iter().enumerate() {
        let base = PUBLISHED_IOUS[0].1[col];
        let expected: f64 = PUBLISHED_IOUS[1..].iter().map(|(_, v)| v[col]).sum::<f64>() - 14.0 * base;
        let got: f64 = table[*key].iter().map(|d| d.delta).sum();
        assert!((got - expected).abs() < 1e-12, "{key}");
    }
    // Largest single improvement on bend, relative.
    assert!((improvement_pct(0.808, 0.913).unwrap() - 12.995).abs() < 1e-3);
}
