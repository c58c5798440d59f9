//! Incremental CSV output with a stable, documented schema. Rows are
//! flushed as they are written so partial histories survive a failing run.
//! Floats carry 17 significant digits; absent optional values are empty
//! fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use goalest::estimator::EstimateReport;

/// Column order of `report.csv`. One row per estimation pass (one per
/// study cycle, or per sweep entry of the verification commands).
pub const REPORT_HEADER: &str = "cycle,qoi,alpha,n_elements,coarse_dofs,fine_dofs,\
coarse_newton_iterations,fine_newton_iterations,j_coarse,j_fine,e_h,e_exact,\
eta1,eta2,eta2_nores,eta_rl,erl_norm,theta_star,i_v,qoi_linearization_gap,\
eff_eta1_vs_eh,eff_eta2_vs_eh,eff_eta1_vs_exact,eff_eta2_vs_exact,\
corrected_eta1,corrected_eta2,corrected_eta1_error,corrected_eta2_error,\
uncorrected_error,linear_qoi,exact_coarse,unreliable_denominator,wall_seconds";

pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{header}")?;
        out.flush()?;
        Ok(CsvWriter { out })
    }

    pub fn write_report_row(
        &mut self,
        cycle: usize,
        r: &EstimateReport,
        wall_seconds: f64,
    ) -> std::io::Result<()> {
        let row = [
            cycle.to_string(),
            r.qoi.clone(),
            float(r.alpha),
            r.n_elements.to_string(),
            r.coarse_dofs.to_string(),
            r.fine_dofs.to_string(),
            r.coarse_newton_iterations.to_string(),
            r.fine_newton_iterations
                .map(|n| n.to_string())
                .unwrap_or_default(),
            float(r.j_coarse),
            opt(r.j_fine),
            opt(r.e_h),
            opt(r.e_exact),
            float(r.eta1),
            opt(r.eta2),
            opt(r.eta2_nores),
            opt(r.eta_rl),
            opt(r.erl_norm),
            opt(r.theta_star),
            opt(r.i_v),
            opt(r.qoi_linearization_gap),
            opt(r.eff_eta1_vs_eh),
            opt(r.eff_eta2_vs_eh),
            opt(r.eff_eta1_vs_exact),
            opt(r.eff_eta2_vs_exact),
            float(r.corrected_eta1),
            opt(r.corrected_eta2),
            opt(r.corrected_eta1_error),
            opt(r.corrected_eta2_error),
            opt(r.uncorrected_error),
            r.linear_qoi.to_string(),
            r.exact_coarse.to_string(),
            r.unreliable_denominator.to_string(),
            float(wall_seconds),
        ];
        writeln!(self.out, "{}", row.join(","))?;
        self.out.flush()
    }
}

/// 17 significant digits, enough to round-trip any f64.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}
