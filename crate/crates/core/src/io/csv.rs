//! CSV tables.
//!
//! Every file starts with the line `schema=1`, followed by `# key=value`
//! metadata lines, the column header and the rows. Numbers are written with
//! 17 significant digits. Tables may end with `# key=value` footer lines.

use std::fmt::Write as _;

use crate::analysis::{BoundSeries, SweepResult};
use crate::distributions::TimeDistribution;
use crate::io::units::{Dimension, Units};
use crate::measurement::DetectionRecord;

pub const SCHEMA: &str = "schema=1";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_else(|| "nan".into())
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    metadata: Vec<(String, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    footer: Vec<(String, String)>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            ..Default::default()
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn footer(mut self, key: &str, value: impl ToString) -> Self {
        self.footer.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(SCHEMA);
        out.push('\n');
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        for (k, v) in &self.footer {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }
}

/// Times in seconds.
pub fn record_table(rec: &DetectionRecord, units: &Units) -> Table {
    let s = &rec.schedule;
    let to_s = |t: f64| units.to_si(Dimension::Time, t);
    let mut t = Table::new(&["t_bin_end", "removed", "survival"])
        .meta("time_unit", "s")
        .meta("model", s.model)
        .meta("delta_t", fmt_num(to_s(s.delta_t)))
        .meta("v0_hbar_per_s", fmt_opt(s.v0.map(|v| units.to_si(Dimension::Rate, v))))
        .meta("t_start", fmt_num(to_s(rec.t_start)))
        .meta("detected_fraction", fmt_num(rec.detected_fraction))
        .meta("escaped", fmt_num(rec.escaped))
        .meta("reflection_flag", rec.reflection_flag);
    for ((tb, r), n) in rec.t_bins.iter().zip(&rec.removed).zip(&rec.survival) {
        t.push(vec![fmt_num(to_s(*tb)), fmt_num(*r), fmt_num(*n)]);
    }
    t
}

/// Times in seconds, densities per second.
pub fn distribution_table(d: &TimeDistribution, units: &Units) -> Table {
    let to_s = |t: f64| units.to_si(Dimension::Time, t);
    let per_s = units.internal_per_si(Dimension::Time);
    let mut t = Table::new(&["t", "density"])
        .meta("time_unit", "s")
        .meta("kind", d.kind)
        .meta("detected_fraction", fmt_num(d.detected_fraction))
        .meta("raw_integral", fmt_opt(d.raw_integral))
        .meta("renormalized", d.renormalized)
        .meta("source", &d.metadata);
    if let Some(w) = d.bin_width {
        t = t.meta("bin_width", fmt_num(to_s(w)));
    }
    for (tv, p) in d.t_values.iter().zip(&d.density) {
        t.push(vec![fmt_num(to_s(*tv)), fmt_num(p * per_s)]);
    }
    t
}

/// Abscissa and times in seconds, `V0` in `hbar/s`.
pub fn sweep_table(res: &SweepResult, units: &Units) -> Table {
    let to_s = |t: f64| units.to_si(Dimension::Time, t);
    let mut t = Table::new(&["abscissa", "V0", "mean_t", "detected_fraction", "reflected", "l1_to_zeno"])
        .meta("time_unit", "s")
        .meta("v0_unit", "hbar/s")
        .meta("model", res.model)
        .meta(
            "abscissa",
            if res.model == crate::measurement::MeasurementModel::Continuous {
                "hbar/(2 V0)"
            } else {
                "delta_t"
            },
        );
    for r in &res.rows {
        t.push(vec![
            fmt_num(to_s(r.abscissa)),
            fmt_opt(r.v0.map(|v| units.to_si(Dimension::Rate, v))),
            fmt_opt(r.mean_t.map(to_s)),
            fmt_num(r.detected_fraction),
            (r.reflection_flag as u8).to_string(),
            fmt_opt(r.l1_to_zeno_ideal),
        ]);
    }
    t.footer("fit_slope", fmt_num(res.fit.slope))
        .footer("fit_intercept", fmt_num(to_s(res.fit.intercept)))
        .footer("fit_rms_residual", fmt_num(to_s(res.fit.rms_residual)))
        .footer("fit_points", res.fit.n_points)
        .footer("zeno_mean", fmt_num(to_s(res.zeno_mean)))
        .footer("zeno_width", fmt_num(to_s(res.zeno_width)))
}

/// One block of rows per coupling; times in seconds, the commutator and its
/// bound in `(hbar/s)^2`.
pub fn bounds_table(series: &[(f64, BoundSeries)], units: &Units) -> Table {
    let to_s = |t: f64| units.to_si(Dimension::Time, t);
    let rate2 = units.to_si(Dimension::Rate, 1.0).powi(2);
    let mut t = Table::new(&["v0_over_dh0", "t", "dH0_over_V0", "comm_lhs", "bound_rhs", "N_plus"])
        .meta("time_unit", "s")
        .meta("commutator_unit", "(hbar/s)^2");
    for (m, s) in series {
        for i in 0..s.times.len() {
            t.push(vec![
                fmt_num(*m),
                fmt_num(to_s(s.times[i])),
                fmt_num(s.ratio_dh0_v0[i]),
                fmt_num(s.commutator_lhs[i] * rate2),
                fmt_num(s.bound_rhs[i] * rate2),
                fmt_num(s.n_plus[i]),
            ]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn layout() {
        let mut t = Table::new(&["a", "b"]).meta("k", "v").footer("f", 1);
        t.push(vec!["1".into(), "2".into()]);
        assert_eq!(t.render(), "schema=1\n# k=v\na,b\n1,2\n# f=1\n");
    }
}
