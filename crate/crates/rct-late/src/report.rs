//! Report assembly and emission.
//!
//! Floats are written with 17 significant digits in both JSON and CSV, so a
//! parse of the emitted text recovers the exact binary value. Non-finite
//! values appear as the strings `NaN`, `Infinity`, and `-Infinity` (quoted
//! in JSON).

use std::path::Path;

use crate::blocked::PooledResult;
use crate::config::Design;
use crate::error::Result;
use crate::estimator::{infer, LateResult, Reference, VarianceComponents, VarianceMethod};
use crate::sim::{SimulationConfig, SimulationSummary};

/// Formats a float with 17 significant digits (exact round-trip).
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x == f64::INFINITY {
        "Infinity".to_string()
    } else if x == f64::NEG_INFINITY {
        "-Infinity".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn json_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("\"{}\"", format_float(x))
    }
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Per-method inference block of a report.
#[derive(Debug, Clone)]
pub struct MethodReport {
    pub method: VarianceMethod,
    pub variance: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

/// One block's row in a blocked report.
#[derive(Debug, Clone)]
pub struct BlockReport {
    pub block: String,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub tau_itt: f64,
    pub pi_itt: f64,
    pub tau_late: f64,
    pub var_qbar: f64,
    pub weight: f64,
}

/// A finished estimation report, ready to serialize.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub design: Design,
    pub n: usize,
    /// Cluster count, for clustered designs.
    pub m: Option<usize>,
    /// Block count, for blocked designs.
    pub h: Option<usize>,
    pub tau_itt: f64,
    pub pi_itt: f64,
    pub tau_late: f64,
    pub df: f64,
    pub first_stage_f: f64,
    pub methods: Vec<MethodReport>,
    pub components: Option<VarianceComponents>,
    pub warnings: Vec<String>,
    pub per_block: Option<Vec<BlockReport>>,
    pub dropped_blocks: Vec<(String, String)>,
}

impl EstimateReport {
    /// Builds a report from a simple or clustered result, recomputing the
    /// interval for every requested variance method.
    pub fn from_late_result(
        result: &LateResult,
        design: Design,
        n: usize,
        m: Option<usize>,
        alpha: f64,
        reference: Reference,
    ) -> Result<Self> {
        let mut methods = Vec::new();
        for (&method, &variance) in &result.variance {
            let inference = infer(result.tau_late, variance, result.df, alpha, reference)?;
            methods.push(MethodReport {
                method,
                variance,
                se: inference.se,
                ci_lower: inference.ci.0,
                ci_upper: inference.ci.1,
                t_stat: inference.t_stat,
                p_value: inference.p_value,
            });
        }
        Ok(EstimateReport {
            design,
            n,
            m,
            h: None,
            tau_itt: result.tau_itt,
            pi_itt: result.pi_itt,
            tau_late: result.tau_late,
            df: result.df,
            first_stage_f: result.first_stage_f,
            methods,
            components: Some(result.components),
            warnings: result.warnings.iter().map(|w| w.to_string()).collect(),
            per_block: None,
            dropped_blocks: Vec::new(),
        })
    }

    /// Builds a report from a pooled (blocked) result.
    pub fn from_pooled_result(
        pooled: &PooledResult,
        design: Design,
        m: Option<usize>,
        first_stage_f: f64,
        alpha: f64,
        reference: Reference,
    ) -> Result<Self> {
        let inference = infer(
            pooled.tau_late,
            pooled.variance,
            pooled.df,
            alpha,
            reference,
        )?;
        let methods = vec![MethodReport {
            method: VarianceMethod::Db,
            variance: pooled.variance,
            se: inference.se,
            ci_lower: inference.ci.0,
            ci_upper: inference.ci.1,
            t_stat: inference.t_stat,
            p_value: inference.p_value,
        }];
        let per_block = pooled
            .blocks
            .iter()
            .map(|b| BlockReport {
                block: b.label.clone(),
                n: b.n_b,
                n_treated: b.n_treated,
                n_control: b.n_control,
                tau_itt: b.tau_itt,
                pi_itt: b.pi_itt,
                tau_late: b.tau_late,
                var_qbar: b.var_qbar,
                weight: b.weight,
            })
            .collect();
        Ok(EstimateReport {
            design,
            n: pooled.n,
            m,
            h: Some(pooled.h),
            tau_itt: pooled.tau_itt,
            pi_itt: pooled.pi_itt,
            tau_late: pooled.tau_late,
            df: pooled.df,
            first_stage_f,
            methods,
            components: None,
            warnings: pooled.warnings.iter().map(|w| w.to_string()).collect(),
            per_block: Some(per_block),
            dropped_blocks: pooled.dropped.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        out.push_str(&format!(
            "  \"design\": {},\n",
            json_string(self.design.as_str())
        ));
        out.push_str(&format!("  \"n\": {},\n", self.n));
        if let Some(m) = self.m {
            out.push_str(&format!("  \"m\": {m},\n"));
        }
        if let Some(h) = self.h {
            out.push_str(&format!("  \"h\": {h},\n"));
        }
        out.push_str(&format!("  \"tau_itt\": {},\n", json_float(self.tau_itt)));
        out.push_str(&format!("  \"pi_itt\": {},\n", json_float(self.pi_itt)));
        out.push_str(&format!("  \"tau_late\": {},\n", json_float(self.tau_late)));
        out.push_str(&format!("  \"df\": {},\n", json_float(self.df)));
        out.push_str(&format!(
            "  \"first_stage_f\": {},\n",
            json_float(self.first_stage_f)
        ));
        out.push_str("  \"methods\": [\n");
        for (i, m) in self.methods.iter().enumerate() {
            out.push_str(&format!(
                "    {{\"method\": {}, \"variance\": {}, \"se\": {}, \"ci_lower\": {}, \"ci_upper\": {}, \"t_stat\": {}, \"p_value\": {}}}{}\n",
                json_string(&m.method.to_string()),
                json_float(m.variance),
                json_float(m.se),
                json_float(m.ci_lower),
                json_float(m.ci_upper),
                json_float(m.t_stat),
                json_float(m.p_value),
                if i + 1 < self.methods.len() { "," } else { "" }
            ));
        }
        out.push_str("  ],\n");
        match &self.components {
            Some(c) => {
                out.push_str("  \"variance_components\": {\n");
                for (key, arm, last) in [
                    ("treated", &c.treated, false),
                    ("control", &c.control, true),
                ] {
                    out.push_str(&format!(
                        "    \"{key}\": {{\"s2_ry\": {}, \"s2_rd\": {}, \"s2_ryd\": {}, \"s2_r\": {}}}{}\n",
                        json_float(arm.s2_ry),
                        json_float(arm.s2_rd),
                        json_float(arm.s2_ryd),
                        json_float(arm.s2_r),
                        if last { "" } else { "," }
                    ));
                }
                out.push_str("  },\n");
            }
            None => out.push_str("  \"variance_components\": null,\n"),
        }
        out.push_str(&format!(
            "  \"warnings\": [{}],\n",
            self.warnings
                .iter()
                .map(|w| json_string(w))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        match &self.per_block {
            Some(blocks) => {
                out.push_str("  \"per_block\": [\n");
                for (i, b) in blocks.iter().enumerate() {
                    out.push_str(&format!(
                        "    {{\"block\": {}, \"n\": {}, \"n_treated\": {}, \"n_control\": {}, \"tau_itt\": {}, \"pi_itt\": {}, \"tau_late\": {}, \"var_qbar\": {}, \"weight\": {}}}{}\n",
                        json_string(&b.block),
                        b.n,
                        b.n_treated,
                        b.n_control,
                        json_float(b.tau_itt),
                        json_float(b.pi_itt),
                        json_float(b.tau_late),
                        json_float(b.var_qbar),
                        json_float(b.weight),
                        if i + 1 < blocks.len() { "," } else { "" }
                    ));
                }
                out.push_str("  ],\n");
            }
            None => out.push_str("  \"per_block\": null,\n"),
        }
        out.push_str(&format!(
            "  \"dropped_blocks\": [{}]\n",
            self.dropped_blocks
                .iter()
                .map(|(label, reason)| format!(
                    "{{\"block\": {}, \"reason\": {}}}",
                    json_string(label),
                    json_string(reason)
                ))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        out.push_str("}\n");
        out
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "design",
                "n",
                "m",
                "h",
                "method",
                "tau_itt",
                "pi_itt",
                "tau_late",
                "variance",
                "se",
                "ci_lower",
                "ci_upper",
                "t_stat",
                "p_value",
                "df",
                "first_stage_f",
                "s2_ry_treated",
                "s2_rd_treated",
                "s2_ryd_treated",
                "s2_r_treated",
                "s2_ry_control",
                "s2_rd_control",
                "s2_ryd_control",
                "s2_r_control",
                "warnings",
            ])
            .expect("in-memory write");
        let opt_count = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let comps = |f: fn(&VarianceComponents) -> f64| {
            self.components
                .as_ref()
                .map(|c| format_float(f(c)))
                .unwrap_or_default()
        };
        for m in &self.methods {
            writer
                .write_record([
                    self.design.as_str().to_string(),
                    self.n.to_string(),
                    opt_count(self.m),
                    opt_count(self.h),
                    m.method.to_string(),
                    format_float(self.tau_itt),
                    format_float(self.pi_itt),
                    format_float(self.tau_late),
                    format_float(m.variance),
                    format_float(m.se),
                    format_float(m.ci_lower),
                    format_float(m.ci_upper),
                    format_float(m.t_stat),
                    format_float(m.p_value),
                    format_float(self.df),
                    format_float(self.first_stage_f),
                    comps(|c| c.treated.s2_ry),
                    comps(|c| c.treated.s2_rd),
                    comps(|c| c.treated.s2_ryd),
                    comps(|c| c.treated.s2_r),
                    comps(|c| c.control.s2_ry),
                    comps(|c| c.control.s2_rd),
                    comps(|c| c.control.s2_ryd),
                    comps(|c| c.control.s2_r),
                    self.warnings.join(";"),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf8")
    }
}

/// Serializes a simulation summary as JSON.
pub fn simulation_report_json(cfg: &SimulationConfig, summary: &SimulationSummary) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"n\": {},\n", cfg.n));
    out.push_str(&format!("  \"p\": {},\n", json_float(cfg.p)));
    out.push_str(&format!("  \"dbar0\": {},\n", json_float(cfg.dbar0)));
    out.push_str(&format!("  \"dbar1\": {},\n", json_float(cfg.dbar1)));
    out.push_str(&format!("  \"with_covariate\": {},\n", cfg.with_covariate));
    out.push_str(&format!("  \"num_datasets\": {},\n", summary.datasets));
    out.push_str(&format!("  \"reps\": {},\n", summary.reps));
    out.push_str(&format!("  \"alpha\": {},\n", json_float(cfg.alpha)));
    out.push_str(&format!("  \"seed\": {},\n", cfg.seed));
    out.push_str("  \"methods\": [\n");
    let count = summary.methods.len();
    for (i, (method, s)) in summary.methods.iter().enumerate() {
        out.push_str(&format!(
            "    {{\"method\": {}, \"bias\": {}, \"coverage\": {}, \"true_se\": {}, \"mean_est_se\": {}, \"rejected_replications\": {}}}{}\n",
            json_string(&method.to_string()),
            json_float(s.bias),
            json_float(s.coverage),
            json_float(s.true_se),
            json_float(s.mean_est_se),
            s.rejected_replications,
            if i + 1 < count { "," } else { "" }
        ));
    }
    out.push_str("  ]\n}\n");
    out
}

/// Serializes a simulation summary as CSV, one row per method.
pub fn simulation_report_csv(cfg: &SimulationConfig, summary: &SimulationSummary) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "n",
            "p",
            "dbar0",
            "dbar1",
            "with_covariate",
            "num_datasets",
            "reps",
            "seed",
            "method",
            "bias",
            "coverage",
            "true_se",
            "mean_est_se",
            "rejected_replications",
        ])
        .expect("in-memory write");
    for (method, s) in &summary.methods {
        writer
            .write_record([
                cfg.n.to_string(),
                format_float(cfg.p),
                format_float(cfg.dbar0),
                format_float(cfg.dbar1),
                cfg.with_covariate.to_string(),
                summary.datasets.to_string(),
                summary.reps.to_string(),
                cfg.seed.to_string(),
                method.to_string(),
                format_float(s.bias),
                format_float(s.coverage),
                format_float(s.true_se),
                format_float(s.mean_est_se),
                s.rejected_replications.to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Writes report text to a file.
pub fn write_report(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}
