use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_upper_tail(t: f64, df: f64) -> f64 {
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, df / (df + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// One-tailed paired t-test of H1: mean(a − b) > 0.
pub fn paired_t_test_one_tailed(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension("paired samples differ in length".into()));
    }
    let m = a.len();
    if m < 2 {
        return Err(Error::InsufficientData("paired test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mf = m as f64;
    let mean = d.iter().sum::<f64>() / mf;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (mf - 1.0);
    // Relative guard so constant differences with rounding noise count as degenerate.
    let scale = d.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if var.sqrt() <= 1e-13 * scale || var == 0.0 {
        return Err(Error::DegeneratePairedTest);
    }
    let t = mean / (var.sqrt() / mf.sqrt());
    let df = mf - 1.0;
    Ok(PairedTest {
        t,
        df,
        p_value: student_t_upper_tail(t, df),
    })
}
