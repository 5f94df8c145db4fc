//! Pooled two-sample Student's t-test and one-way ANOVA.

use super::beta::{f_upper_tail, student_t_two_tailed};
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    /// Zero pooled variance with different means; `t` is infinite and `p` is 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: f64,
    pub df_within: f64,
    /// Zero within-group variance with different group means.
    pub degenerate: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Two-tailed pooled-variance t-test of `a` against `b`.
pub fn t_test_two_sample(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    for (xs, need) in [(a, 2), (b, 2)] {
        if xs.len() < need {
            return Err(StatsError::TooFewSamples {
                needed: need,
                got: xs.len(),
            });
        }
        check_finite(xs)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let df = na + nb - 2.0;
    let pooled = (sum_sq_dev(a, ma) + sum_sq_dev(b, mb)) / df;
    let diff = ma - mb;
    if pooled == 0.0 {
        return Ok(if diff == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                df,
                degenerate: false,
            }
        } else {
            TTest {
                t: diff.signum() * f64::INFINITY,
                p: 0.0,
                df,
                degenerate: true,
            }
        });
    }
    let t = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    Ok(TTest {
        t,
        p: student_t_two_tailed(t, df),
        df,
        degenerate: false,
    })
}

/// One-way ANOVA across `groups`.
pub fn anova_one_way<G: AsRef<[f64]>>(groups: &[G]) -> Result<Anova, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for g in groups {
        let g = g.as_ref();
        if g.len() < 2 {
            return Err(StatsError::TooFewSamples {
                needed: 2,
                got: g.len(),
            });
        }
        check_finite(g)?;
    }
    let k = groups.len() as f64;
    let n: f64 = groups.iter().map(|g| g.as_ref().len() as f64).sum();
    let grand = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / n;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let g = g.as_ref();
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand) * (m - grand);
        ss_within += sum_sq_dev(g, m);
    }
    let df_between = k - 1.0;
    let df_within = n - k;
    let means_equal = groups
        .iter()
        .map(|g| mean(g.as_ref()))
        .all(|m| m == mean(groups[0].as_ref()));
    if ss_within == 0.0 {
        return Ok(if means_equal {
            Anova {
                f: 0.0,
                p: 1.0,
                df_between,
                df_within,
                degenerate: false,
            }
        } else {
            Anova {
                f: f64::INFINITY,
                p: 0.0,
                df_between,
                df_within,
                degenerate: true,
            }
        });
    }
    if means_equal {
        ss_between = 0.0;
    }
    let f = (ss_between / df_between) / (ss_within / df_within);
    Ok(Anova {
        f,
        p: f_upper_tail(f, df_between, df_within),
        df_between,
        df_within,
        degenerate: false,
    })
}
