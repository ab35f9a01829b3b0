//! Merit functions and trace rows.

use std::fmt::Write as _;
use std::io;

use nalgebra::DVector;
use thiserror::Error;

use crate::problem::DistributedProblem;
use crate::util::mean;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("the reference vector has zero norm")]
    ZeroTruth,
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
}

/// `D = (1/I) Σ_i ‖x_i − x̄‖²`.
pub fn disagreement(xs: &[DVector<f64>]) -> f64 {
    let bar = mean(xs);
    xs.iter().map(|x| (x - &bar).norm_squared()).sum::<f64>() / xs.len() as f64
}

/// `‖x̄ − x₀‖² / ‖x₀‖²`.
pub fn nmse(x_bar: &DVector<f64>, truth: &DVector<f64>) -> Result<f64, MetricError> {
    if x_bar.len() != truth.len() {
        return Err(MetricError::Dimension(x_bar.len(), truth.len()));
    }
    let t = truth.norm_squared();
    if t == 0.0 {
        return Err(MetricError::ZeroTruth);
    }
    Ok((x_bar - truth).norm_squared() / t)
}

/// `J = ‖x̄ − prox_{G + ι_K}(x̄ − ∇F(x̄))‖_∞`, which reduces to the projected
/// form when `G = 0`.
pub fn stationarity_gap(problem: &DistributedProblem, x_bar: &DVector<f64>) -> f64 {
    problem.stationarity_residual(x_bar)
}

/// One trace row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub n: usize,
    /// Communication exchanges per agent so far.
    pub comm: usize,
    pub j: f64,
    pub d: f64,
    pub nmse: Option<f64>,
    pub u: f64,
    /// `max_i ‖y_i − (1/I) Σ_j ∇f_j(x_i)‖`; absent for schemes without trackers.
    pub track_err: Option<f64>,
}

pub const CSV_HEADER: &str = "n,comm,J,D,NMSE,U,track_err";

fn fmt_float(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn fmt_opt(out: &mut String, v: Option<f64>) {
    match v {
        Some(v) => fmt_float(out, v),
        None => out.push_str("NA"),
    }
}

impl MetricRow {
    /// The row as CSV, without a trailing newline. Floats carry 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{},", self.n, self.comm);
        fmt_float(&mut s, self.j);
        s.push(',');
        fmt_float(&mut s, self.d);
        s.push(',');
        fmt_opt(&mut s, self.nmse);
        s.push(',');
        fmt_float(&mut s, self.u);
        s.push(',');
        fmt_opt(&mut s, self.track_err);
        s
    }
}

pub fn write_csv(rows: &[MetricRow], mut out: impl io::Write) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{BoxSet, FnCost, LocalCost, ZeroRegularizer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn s(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn consensual_states_have_zero_disagreement() {
        let x = s(&[1.0, -2.0]);
        assert_eq!(disagreement(&[x.clone(), x.clone(), x]), 0.0);
    }

    #[test]
    fn two_point_disagreement() {
        assert_eq!(disagreement(&[s(&[0.0]), s(&[2.0])]), 1.0);
    }

    #[test]
    fn disagreement_matches_a_pairwise_formula() {
        // (1/I) Σ ‖x_i − x̄‖² = (1/(2I²)) Σ_{i,j} ‖x_i − x_j‖².
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = rng.random_range(1..8);
            let xs: Vec<_> = (0..n).map(|_| DVector::from_fn(3, |_, _| rng.random::<f64>())).collect();
            let mut pair = 0.0;
            for a in &xs {
                for b in &xs {
                    pair += (a - b).norm_squared();
                }
            }
            pair /= 2.0 * (n * n) as f64;
            assert!((disagreement(&xs) - pair).abs() <= 1e-12);
        }
    }

    #[test]
    fn nmse_scale_identities() {
        let x0 = s(&[1.0, -3.0, 0.5]);
        assert_eq!(nmse(&x0, &x0).unwrap(), 0.0);
        assert_eq!(nmse(&DVector::zeros(3), &x0).unwrap(), 1.0);
        assert_eq!(nmse(&(&x0 * 2.0), &x0).unwrap(), 1.0);
        assert_eq!(nmse(&x0, &DVector::zeros(3)), Err(MetricError::ZeroTruth));
    }

    #[test]
    fn gap_of_a_square_on_the_unit_interval() {
        let c: Arc<dyn LocalCost> = Arc::new(FnCost::new(1, |x| x[0] * x[0], |x| s(&[2.0 * x[0]])));
        let p = DistributedProblem::new(vec![c], Arc::new(ZeroRegularizer), Arc::new(BoxSet::uniform(1, 0.0, 1.0)))
            .unwrap();
        assert_eq!(stationarity_gap(&p, &s(&[0.5])), 0.5);
        assert_eq!(stationarity_gap(&p, &s(&[0.0])), 0.0);
    }

    #[test]
    fn csv_rows_use_na_and_full_precision() {
        let row = MetricRow {
            n: 3,
            comm: 6,
            j: 0.1,
            d: 0.0,
            nmse: None,
            u: -1.5,
            track_err: Some(2.0),
        };
        assert_eq!(
            row.to_csv(),
            "3,6,1.0000000000000001e-1,0.0000000000000000e0,NA,-1.5000000000000000e0,2.0000000000000000e0"
        );
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(CSV_HEADER));
    }
}
