//! Property tests for the data-model and algorithm invariants.

use proptest::prelude::*;

use radsentry::cluster_synth::{kmeans_fit, nearest_neighbors, smote_oversample, KMeansConfig, SmoteConfig};
use radsentry::evaluation::{compute_metrics, split_train_test, ConfusionCounts};
use radsentry::gbdt::{GbdtParams, GradientBoostedEnsemble};
use radsentry::ingest::{filter_radiation, parse_export, SchemaMapping, UnitFilter};
use radsentry::matrix::FeatureMatrix;
use radsentry::model_store::{export_compact, load_compact};
use radsentry::preprocess::{apply_minmax, fit_minmax, one_hot_encode, EncoderMap};
use radsentry::tuning::{sample_points, select_features, SearchSpace};

const HEADER: &str = "Captured Time,Latitude,Longitude,Value,Unit,Location Name,Device ID,MD5Sum,Height,Surface,Radiation,Uploaded Time,Loader ID";

fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows).unwrap()
}

fn rows_strategy(max_rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, cols), 2..max_rows)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
enum Line {
    Good { unit: &'static str, value: f64, device: u8 },
    BadLatitude,
    BadValue,
    Short,
}

fn line_strategy() -> impl Strategy<Value = Line> {
    prop_oneof![
        4 => (prop::sample::select(vec!["usv", "cpm", "uSv"]), 0.0f64..5.0, 0u8..6)
            .prop_map(|(unit, value, device)| Line::Good { unit, value, device }),
        1 => Just(Line::BadLatitude),
        1 => Just(Line::BadValue),
        1 => Just(Line::Short),
    ]
}

fn render(lines: &[Line]) -> String {
    let mut s = format!("{HEADER}\n");
    for (i, l) in lines.iter().enumerate() {
        let t = format!("2023-03-01 10:{:02}:{:02}", i / 60 % 60, i % 60);
        let up = "2023-03-02 10:00:00.000000";
        match l {
            Line::Good { unit, value, device } => {
                s += &format!("{t},37.1,140.2,{value},{unit},,{device},x,,,,{up},1\n");
            }
            Line::BadLatitude => s += &format!("{t},north,140.2,0.1,usv,,1,x,,,,{up},1\n"),
            Line::BadValue => s += &format!("{t},37.1,140.2,,usv,,1,x,,,,{up},1\n"),
            Line::Short => s += &format!("{t},37.1\n"),
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingest_report_reconciles(lines in prop::collection::vec(line_strategy(), 0..60)) {
        let (records, mut report) = parse_export(render(&lines).as_bytes(), &SchemaMapping::default()).unwrap();
        prop_assert!(report.reconciles());
        prop_assert_eq!(report.rows_read, lines.len());
        let readings = filter_radiation(&records, &UnitFilter::default(), &mut report);
        prop_assert!(report.reconciles());
        prop_assert_eq!(readings.len(), report.rows_kept);
        let expected = lines.iter().filter(|l| matches!(l, Line::Good { unit, .. } if *unit != "cpm")).count();
        prop_assert_eq!(readings.len(), expected);
        for r in &readings {
            prop_assert!(r.value_usv_h >= 0.0);
            prop_assert!(r.captured_unix.is_finite() && r.uploaded_unix.is_finite());
        }
    }

    #[test]
    fn minmax_maps_training_data_into_unit_interval(rows in rows_strategy(40, 3), scale in 0.1f64..1e4) {
        let scaled_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let m = matrix(&scaled_rows);
        let p = fit_minmax(&m).unwrap();
        for j in 0..3 {
            prop_assert!(p.min[j] <= p.max[j]);
        }
        let s = apply_minmax(&m, &p).unwrap();
        prop_assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn one_hot_rows_have_a_single_one(ids in prop::collection::vec("[a-d]{1,2}", 1..30)) {
        let readings: Vec<_> = ids
            .iter()
            .map(|id| radsentry::ingest::RadiationReading {
                captured_unix: 0.0,
                latitude: 0.0,
                longitude: 0.0,
                value_usv_h: 0.1,
                device_id: id.clone(),
                uploaded_unix: 0.0,
            })
            .collect();
        let enc = EncoderMap::from_readings(&readings);
        prop_assert!(enc.devices.windows(2).all(|w| w[0] < w[1]));
        let m = one_hot_encode(&readings, &enc);
        for (i, row) in m.rows().enumerate() {
            prop_assert_eq!(row.iter().sum::<f64>(), 1.0);
            prop_assert_eq!(row[enc.index_of(&ids[i]).unwrap()], 1.0);
        }
    }

    #[test]
    fn kmeans_assignments_are_nearest_and_inertia_consistent(rows in rows_strategy(60, 2), k in 1usize..5, seed in 0u64..1000) {
        prop_assume!(k <= rows.len());
        let m = matrix(&rows);
        let model = kmeans_fit(&m, &KMeansConfig { k, seed, ..Default::default() }).unwrap();
        let mut inertia = 0.0;
        for (i, row) in m.rows().enumerate() {
            let a = model.assignments[i];
            let d = sq(row, model.centroid(a));
            for c in 0..k {
                let dc = sq(row, model.centroid(c));
                prop_assert!(d < dc || (d == dc && a <= c));
            }
            inertia += d;
        }
        prop_assert!((inertia - model.inertia).abs() <= 1e-6 * inertia.max(1e-12));
        prop_assert!(model.inertia_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
    }

    #[test]
    fn smote_rows_lie_on_neighbour_segments(rows in rows_strategy(25, 3), n in 1usize..40, k in 1usize..6, seed in 0u64..1000) {
        let m = matrix(&rows);
        let out = smote_oversample(&m, &SmoteConfig { n_synthetic: n, k_neighbors: k, seed }).unwrap();
        let nn = nearest_neighbors(&m, out.k_used);
        for s in out.synthetic.rows() {
            let on_segment = (0..m.n_rows()).any(|i| {
                nn[i].iter().any(|&j| on_segment(s, m.row(i), m.row(j)))
            });
            prop_assert!(on_segment);
        }
    }

    #[test]
    fn split_partitions_and_stratifies(labels in prop::collection::vec(0u8..2, 4..200), frac in 0.1f64..0.9, seed in 0u64..1000) {
        let pos = labels.iter().filter(|&&l| l == 1).count();
        prop_assume!(pos >= 2 && labels.len() - pos >= 2);
        let neg = labels.len() - pos;
        let (tp, tn) = (((pos as f64) * frac).round() as usize, ((neg as f64) * frac).round() as usize);
        let result = split_train_test(&labels, frac, seed);
        if tp + tn == 0 || tp + tn == labels.len() {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let s = result.unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let test_pos = s.test.iter().filter(|&&i| labels[i] == 1).count();
        prop_assert_eq!(test_pos, tp);
        prop_assert_eq!(s.test.len(), tp + tn);
    }

    #[test]
    fn metrics_bounded_and_accuracy_consistent(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..300)) {
        let (truth, pred): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = compute_metrics(&truth, &pred).unwrap();
        let c = ConfusionCounts::from_predictions(&truth, &pred).unwrap();
        prop_assert_eq!(c.total(), truth.len());
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((m.accuracy - (c.tp + c.tn) as f64 / truth.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn selection_is_minimal_prefix(gains in prop::collection::vec(0.0f64..10.0, 1..15), threshold in 0.05f64..1.0) {
        prop_assume!(gains.iter().sum::<f64>() > 0.0);
        let sel = select_features(&gains, threshold).unwrap();
        let total: f64 = gains.iter().sum();
        let kept: f64 = sel.ranked.iter().map(|&j| gains[j]).sum();
        prop_assert!(kept >= threshold * total - 1e-9);
        let without_last: f64 = sel.ranked[..sel.ranked.len() - 1].iter().map(|&j| gains[j]).sum();
        prop_assert!(without_last < threshold * total);
        prop_assert!(sel.ranked.windows(2).all(|w| gains[w[0]] >= gains[w[1]]));
    }

    #[test]
    fn sampled_points_are_distinct_and_in_range(n in 1usize..200, seed in 0u64..1000) {
        let space = SearchSpace::default();
        let idx = sample_points(&space, n, seed);
        prop_assert_eq!(idx.len(), n);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), n);
        for i in idx {
            let (e, d, l) = space.point(i);
            prop_assert!((10..=50).contains(&e) && (3..=8).contains(&d) && (4..=20).contains(&l));
        }
    }
}

fn on_segment(s: &[f64], a: &[f64], b: &[f64]) -> bool {
    // recover u from the largest-span coordinate, then check every coordinate
    let j = (0..a.len()).max_by(|&x, &y| (b[x] - a[x]).abs().total_cmp(&(b[y] - a[y]).abs())).unwrap();
    let span = b[j] - a[j];
    let u = if span.abs() < 1e-15 { 0.0 } else { (s[j] - a[j]) / span };
    (-1e-9..=1.0 + 1e-9).contains(&u) && s.iter().zip(a).zip(b).all(|((s, a), b)| (a + u * (b - a) - s).abs() <= 1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ensemble_invariants_and_blob_round_trip(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 40..120),
        leaves in 2usize..12,
        trees in 1usize..12,
        seed in 0u64..100,
    ) {
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] + 0.5 * r[1] * r[2] > 0.0)).collect();
        let m = matrix(&rows);
        let params = GbdtParams { n_estimators: trees, num_leaves: leaves, min_samples_leaf: 2, seed, ..Default::default() };
        let model = GradientBoostedEnsemble::fit(&m, &labels, &params).unwrap();

        let mut total_gain = 0.0;
        for t in &model.trees {
            prop_assert!(t.n_leaves() <= leaves);
            for n in &t.nodes {
                if n.is_leaf() {
                    prop_assert!(n.left < 0 && n.right < 0);
                } else {
                    prop_assert!(n.left >= 0 && n.right >= 0);
                    prop_assert!(n.gain > 0.0);
                    total_gain += n.gain;
                }
            }
        }
        prop_assert!(model.feature_importances.iter().all(|&g| g >= 0.0));
        let imp: f64 = model.feature_importances.iter().sum();
        prop_assert!((imp - total_gain).abs() <= 1e-6 * total_gain.max(1e-12));

        let blob = export_compact(&model).unwrap();
        let c = load_compact(&blob).unwrap();
        prop_assert_eq!(c.encode(), blob);
        let a = model.predict_raw(&m).unwrap();
        let b = c.predict_raw(&m).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        prop_assert!(model.predict_proba(&m).unwrap().iter().all(|p| *p > 0.0 && *p < 1.0));
    }
}
