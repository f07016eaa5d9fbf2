use proptest::collection::vec;
use proptest::prelude::*;

use metrotwin_core::anomaly::{detection_metrics, fit_isolation_forest, IsolationParams};
use metrotwin_core::campaign::AnomalyLabel;
use metrotwin_core::metrology::{cmm_spec_accuracy, tolerance_check};
use metrotwin_core::ml::eval_metrics;
use metrotwin_core::stats::{anova_oneway, descriptive_stats, ols_fit, paired_t_test, unpaired_t_test};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn descriptive_shape(values in vec(-50.0f64..50.0, 2..60)) {
        let d = descriptive_stats(&values).unwrap();
        prop_assert!(d.range >= 0.0);
        prop_assert!(close(d.range, d.max - d.min, 1e-12));
        prop_assert!(close((d.ci95.0 + d.ci95.1) / 2.0, d.mean, 1e-9));
        prop_assert!(d.predictive95.1 - d.predictive95.0 >= d.ci95.1 - d.ci95.0);
        let n = values.len() as f64;
        let ss: f64 = values.iter().map(|v| (v - d.mean).powi(2)).sum();
        prop_assert!(close(d.sample_std, (ss / (n - 1.0)).sqrt(), 1e-9));
    }

    #[test]
    fn paired_test_bounds_and_antisymmetry(pairs in vec((-5.0f64..5.0, -5.0f64..5.0), 3..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(ab) = paired_t_test(&a, &b) {
            let ba = paired_t_test(&b, &a).unwrap();
            prop_assert_eq!(ab.df, a.len() - 1);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
            prop_assert!(close(ab.t_stat, -ba.t_stat, 1e-12));
            prop_assert!(close(ab.p_value, ba.p_value, 1e-12));
        }
    }

    #[test]
    fn anova_bounds_shift_and_two_group_t(
        groups in vec(vec(-10.0f64..10.0, 2..12), 2..5),
        shift in -1e3f64..1e3,
    ) {
        let Ok(a) = anova_oneway(&groups) else { return Ok(()) };
        prop_assert!(a.f_stat >= 0.0);
        prop_assert!((0.0..=1.0).contains(&a.p_value));
        let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v + shift).collect()).collect();
        let b = anova_oneway(&moved).unwrap();
        prop_assert!(close(a.f_stat, b.f_stat, 1e-6), "{} vs {}", a.f_stat, b.f_stat);
        if groups.len() == 2 {
            let t = unpaired_t_test(&groups[0], &groups[1]).unwrap();
            prop_assert!(close(a.f_stat, t.t_stat * t.t_stat, 1e-9));
            prop_assert!(close(a.p_value, t.p_value, 1e-9));
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal(
        rows in vec((1.0f64..500.0, 0u8..2, 15.0f64..35.0, -0.05f64..0.05), 8..50),
    ) {
        let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, f64::from(r.1), r.2]).collect();
        let y: Vec<f64> = rows.iter().map(|r| -0.0152 + 0.00015 * r.0 + 0.0112 * f64::from(r.1) + 0.00078 * r.2 + r.3).collect();
        let Ok(fit) = ols_fit(&x, &y, &["nominal", "device", "temperature"]) else { return Ok(()) };
        prop_assert_eq!(fit.coefficients.len(), 4);
        prop_assert_eq!(fit.p_values.len(), 4);
        prop_assert!(fit.r_squared <= 1.0);
        prop_assert!(fit.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
        let resid: Vec<f64> = x.iter().zip(&y).map(|(r, yi)| yi - fit.predict(r).unwrap()).collect();
        let design = |r: &Vec<f64>| [1.0, r[0], r[1], r[2]];
        for c in 0..4 {
            let dot: f64 = x.iter().zip(&resid).map(|(r, e)| design(r)[c] * e).sum();
            let scale: f64 = x.iter().map(|r| design(r)[c].abs()).sum::<f64>() * y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            prop_assert!(dot.abs() <= 1e-8 * scale.max(1.0), "dot {dot}");
        }
    }

    #[test]
    fn tolerance_monotone(d1 in -0.2f64..0.2, d2 in -0.2f64..0.2, band in 0.001f64..0.2) {
        let (small, large) = if d1.abs() <= d2.abs() { (d1, d2) } else { (d2, d1) };
        if tolerance_check(large, band).unwrap().in_tolerance() {
            prop_assert!(tolerance_check(small, band).unwrap().in_tolerance());
        }
    }

    #[test]
    fn cmm_envelope_grows(a in 0.0f64..2000.0, b in 0.0f64..2000.0) {
        prop_assume!(a < b);
        prop_assert!(cmm_spec_accuracy(a).unwrap() < cmm_spec_accuracy(b).unwrap());
    }

    #[test]
    fn evaluation_inequalities(pairs in vec((-1e3f64..1e3, -1e3f64..1e3), 2..50)) {
        let (t, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(m) = eval_metrics(&t, &p) {
            prop_assert!(m.rmse >= m.mae && m.mae >= 0.0);
            prop_assert!(m.r2 <= 1.0);
        }
    }

    #[test]
    fn detection_rates_are_consistent(truth in vec(any::<bool>(), 4..80), flags in vec(any::<bool>(), 80)) {
        let labels: Vec<AnomalyLabel> = truth
            .iter()
            .enumerate()
            .map(|(i, &a)| AnomalyLabel { record_id: format!("r{i:03}"), is_anomaly: a, injected_offset: if a { 0.1 } else { 0.0 } })
            .collect();
        let flagged: Vec<String> = labels.iter().zip(&flags).filter(|(_, f)| **f).map(|(l, _)| l.record_id.clone()).collect();
        let Ok(m) = detection_metrics(&flagged, &labels) else { return Ok(()) };
        for r in [m.tpr, m.fpr, m.precision, m.f1] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
        prop_assert_eq!(m.true_positives + m.false_positives + m.true_negatives + m.false_negatives, labels.len());
        if m.precision + m.tpr > 0.0 {
            prop_assert!(close(m.f1, 2.0 * m.precision * m.tpr / (m.precision + m.tpr), 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn isolation_scores_lie_in_unit_interval(rows in vec(vec(-100.0f64..100.0, 3), 4..80), seed in 0u64..500) {
        let forest = fit_isolation_forest(&rows, &IsolationParams { n_trees: 25, seed, ..IsolationParams::default() }).unwrap();
        for s in forest.score_all(&rows).unwrap() {
            prop_assert!(s > 0.0 && s <= 1.0);
        }
    }
}
