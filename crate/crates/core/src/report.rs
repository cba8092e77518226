//! CSV tables for the command-line front end.
//!
//! Header row, comma separator, `.` decimal point, LF line endings. Floats are
//! written in Rust's shortest round-trip form, so parsing a field recovers the
//! exact value.

use std::fmt::Write;

use crate::error::Result;
use crate::model::MertonSolution;
use crate::policy::{equivalent_proportional_cost, trading_boundaries_1d};
use crate::simulate::SimResult;

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Boundaries and equivalent proportional cost over a wealth grid.
pub fn boundaries_table(sol: &MertonSolution, wealth: &[f64], lambda: f64) -> Result<Table> {
    let mut t = Table::new(vec!["wealth", "lower", "upper", "merton", "equiv_prop_cost"]);
    for &z in wealth {
        let (lo, hi) = trading_boundaries_1d(sol, z, lambda)?;
        let epc = equivalent_proportional_cost(sol, z, lambda)?;
        t.push(vec![z, lo, hi, sol.pi_m[0], epc]);
    }
    Ok(t)
}

/// One row per simulated cost level.
pub fn study_table(results: &[SimResult]) -> Table {
    let mut t = Table::new(vec!["lambda", "loss", "stderr", "trades_per_year", "liq_frac"]);
    for r in results {
        t.push(vec![r.lambda, r.welfare_loss, r.stderr, r.trades_per_year, r.liquidation_fraction]);
    }
    t
}

/// One row per width multiplier; `paired_diff` is loss(c) − loss(reference)
/// on common random numbers, with its standard error.
pub fn sweep_table(results: &[SimResult], paired: &[(f64, f64)]) -> Table {
    let mut t = Table::new(vec![
        "multiplier",
        "lambda",
        "loss",
        "stderr",
        "trades_per_year",
        "liq_frac",
        "paired_diff",
        "paired_stderr",
    ]);
    for (r, (d, se)) in results.iter().zip(paired) {
        t.push(vec![
            r.width_multiplier,
            r.lambda,
            r.welfare_loss,
            r.stderr,
            r.trades_per_year,
            r.liquidation_fraction,
            *d,
            *se,
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn fields_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let mut t = Table::new(vec!["a"]);
            t.push(vec![v]);
            let csv = t.to_csv();
            let field = csv.lines().nth(1).unwrap();
            prop_assert_eq!(field.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn layout() {
        let mut t = Table::new(vec!["a", "b"]);
        t.push(vec![1.0, 0.25]);
        assert_eq!(t.to_csv(), "a,b\n1,0.25\n");
    }
}
