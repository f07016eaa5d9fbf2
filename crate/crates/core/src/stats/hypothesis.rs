use serde::{Deserialize, Serialize};

use super::descriptive::{mean, sample_variance};
use super::special::{f_survival, student_t_two_sided_p};
use crate::error::{validation, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub df: usize,
    /// Two-sided.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
}

/// Paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(validation(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData { what: "paired t-test", needed: 2, got: n });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mean(&d);
    let sd = sample_variance(&d).sqrt();
    let df = n - 1;
    if sd == 0.0 {
        if md == 0.0 {
            return Ok(TTestResult { t_stat: 0.0, df, p_value: 1.0 });
        }
        return Err(Error::Degenerate("paired differences have zero variance but a nonzero mean".into()));
    }
    let t = md / (sd / (n as f64).sqrt());
    Ok(TTestResult { t_stat: t, df, p_value: student_t_two_sided_p(t, df as f64)? })
}

/// Two-sample t-test with pooled variance.
pub fn unpaired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData { what: "two-sample t-test", needed: 2, got: a.len().min(b.len()) });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0);
    let diff = mean(a) - mean(b);
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        if diff == 0.0 {
            return Ok(TTestResult { t_stat: 0.0, df: a.len() + b.len() - 2, p_value: 1.0 });
        }
        return Err(Error::Degenerate("both samples are constant with different means".into()));
    }
    let t = diff / se;
    let df = a.len() + b.len() - 2;
    Ok(TTestResult { t_stat: t, df, p_value: student_t_two_sided_p(t, df as f64)? })
}

pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData { what: "one-way ANOVA groups", needed: 2, got: groups.len() });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::InsufficientData { what: "one-way ANOVA group size", needed: 2, got: g.len() });
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand).powi(2);
        ssw += g.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    if ssw == 0.0 {
        if ssb == 0.0 {
            return Err(Error::Degenerate("all groups are constant and equal".into()));
        }
        return Ok(AnovaResult { f_stat: f64::INFINITY, df_between, df_within, p_value: 0.0 });
    }
    let f = (ssb / df_between as f64) / (ssw / df_within as f64);
    Ok(AnovaResult { f_stat: f, df_between, df_within, p_value: f_survival(f, df_between as f64, df_within as f64)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_identical_samples() {
        let r = paired_t_test(&[1.0, 2.0, 5.0], &[1.0, 2.0, 5.0]).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn paired_hand_example() {
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 1.0, 1.0]).unwrap();
        assert!((r.t_stat - 4.0).abs() < 1e-12);
        assert_eq!(r.df, 2);
        // df = 2 closed form: 1 - 4/sqrt(18)
        assert!((r.p_value - (1.0 - 4.0 / 18f64.sqrt())).abs() < 1e-12);
        assert!((r.p_value - 0.057).abs() < 5e-4);
    }

    #[test]
    fn paired_antisymmetry() {
        let a = [0.3, 0.9, 1.4, 2.2];
        let b = [0.1, 1.0, 1.1, 1.5];
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        assert_eq!(ab.t_stat, -ba.t_stat);
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn paired_errors() {
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
        assert!(matches!(paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn anova_equal_groups() {
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn anova_hand_example() {
        let r = anova_oneway(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
        assert!((r.f_stat - 5.0).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (1, 2));
    }

    #[test]
    fn anova_translation_invariant() {
        let g = vec![vec![1.0, 2.5, 2.0], vec![3.0, 5.0, 4.2], vec![0.5, 0.7, 1.9]];
        let shifted: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| x + 100.0).collect()).collect();
        let a = anova_oneway(&g).unwrap();
        let b = anova_oneway(&shifted).unwrap();
        assert!((a.f_stat - b.f_stat).abs() < 1e-9 * a.f_stat);
    }

    #[test]
    fn anova_errors() {
        assert!(anova_oneway(&[vec![1.0, 2.0]]).is_err());
        assert!(matches!(anova_oneway(&[vec![1.0], vec![1.0, 2.0]]), Err(Error::InsufficientData { .. })));
        assert!(matches!(anova_oneway(&[vec![1.0, 1.0], vec![1.0, 1.0]]), Err(Error::Degenerate(_))));
        let r = anova_oneway(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(r.f_stat.is_infinite() && r.p_value == 0.0);
    }

    #[test]
    fn two_group_anova_matches_squared_t() {
        let a = vec![0.0023, 0.0051, -0.0012, 0.0040, 0.0019, 0.0007];
        let b = vec![-0.0089, -0.0210, 0.0035, -0.0150, -0.0002];
        let t = unpaired_t_test(&a, &b).unwrap();
        let f = anova_oneway(&[a, b]).unwrap();
        assert!((f.f_stat - t.t_stat * t.t_stat).abs() < 1e-9 * f.f_stat);
        assert!((f.p_value - t.p_value).abs() < 1e-12);
    }
}
