use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::{DistributionFit, DriverFit};
use crate::analysis::{GainMatrix, PermutationResult, SvdDecomp};
use crate::error::{Error, Result};
use crate::features::{CarId, Control, Region, Site};

/// Significant digits of every floating-point value written to a report.
pub const REPORT_DIGITS: usize = 10;

/// Names of the four feature components, in column order.
pub const COMPONENTS: [&str; 4] = ["rel_lat", "rel_lon", "dev_lat", "dev_lon"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trials: usize,
    pub excluded: Vec<ExcludedTrial>,
    pub failed: Vec<FailedTrial>,
    /// Feature samples of retained trials, both agents.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedTrial {
    pub trial_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial_id: String,
    pub error: String,
}

/// Gain matrix of one (site, lead, region) with its decompositions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub site: Site,
    pub lead: CarId,
    pub region: Region,
    pub normalized: GainMatrix,
    pub raw: GainMatrix,
    pub svd_normalized: SvdDecomp,
    pub svd_raw: SvdDecomp,
    /// Adequacy of the acceleration and turn-rate fits.
    pub linear_adequate: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationEntry {
    pub comparison: String,
    pub region: Region,
    pub control: Control,
    pub component: String,
    pub n_a: usize,
    pub n_b: usize,
    pub result: PermutationResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub seed: u64,
    pub summary: RunSummary,
    pub distributions: Vec<DistributionFit>,
    pub drivers: Vec<DriverFit>,
    #[serde(default)]
    pub gains: Vec<GainEntry>,
    #[serde(default)]
    pub permutation_tests: Vec<PermutationEntry>,
}

/// `v` rounded to [`REPORT_DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.*e}", REPORT_DIGITS - 1).parse().expect("formatted float parses")
}

/// Shortest text of the rounded value.
pub fn fmt_num(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().expect("f64 number"));
            *n = serde_json::Number::from_f64(r).expect("finite report value");
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with every float at fixed precision.
pub fn to_fixed_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        to_fixed_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn distribution(&self, site: Site, lead: CarId, region: Region, control: Control) -> Option<&DistributionFit> {
        self.distributions.iter().find(|d| {
            d.key.site == site && d.key.lead == lead && d.key.region == region && d.key.control == control
        })
    }

    pub fn gain(&self, site: Site, lead: CarId, region: Region) -> Option<&GainEntry> {
        self.gains.iter().find(|g| g.site == site && g.lead == lead && g.region == region)
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn nums<const N: usize>(v: &[f64; N]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| fmt_num(*x))
}

pub fn distributions_csv(report: &AnalysisReport) -> Result<String> {
    let header = [
        "site", "lead", "region", "control", "n_samples", "n_train", "n_valid", "mse", "beta", "lengthscale",
        "noise_var", "linear_adequate", "g_rel_lat", "g_rel_lon", "g_dev_lat", "g_dev_lon", "gn_rel_lat",
        "gn_rel_lon", "gn_dev_lat", "gn_dev_lon",
    ];
    csv_text(
        &header,
        report.distributions.iter().map(|d| {
            let k = d.key;
            let mut row = vec![
                k.site.to_string(),
                k.lead.to_string(),
                k.region.to_string(),
                k.control.to_string(),
                d.n_samples.to_string(),
                d.n_train.to_string(),
                d.n_valid.to_string(),
                fmt_num(d.mse),
                fmt_num(d.theta.beta),
                fmt_num(d.theta.lengthscale),
                fmt_num(d.theta.noise_var),
                d.linear_adequate.to_string(),
            ];
            row.extend(nums(&d.gain_raw));
            row.extend(nums(&d.gain_normalized));
            row
        }),
    )
}

pub fn drivers_csv(report: &AnalysisReport) -> Result<String> {
    let header = [
        "site", "lead", "region", "control", "trial_id", "agent", "n_samples", "g_rel_lat", "g_rel_lon", "g_dev_lat",
        "g_dev_lon", "gn_rel_lat", "gn_rel_lon", "gn_dev_lat", "gn_dev_lon",
    ];
    csv_text(
        &header,
        report.drivers.iter().map(|d| {
            let k = &d.key.distribution;
            let mut row = vec![
                k.site.to_string(),
                k.lead.to_string(),
                k.region.to_string(),
                k.control.to_string(),
                d.key.trial_id.clone(),
                d.key.agent.to_string(),
                d.n_samples.to_string(),
            ];
            row.extend(nums(&d.gain_raw));
            row.extend(nums(&d.gain_normalized));
            row
        }),
    )
}

pub fn comparison_csv(report: &AnalysisReport) -> Result<String> {
    let header = [
        "site", "lead", "region", "control", "linear_mse", "squared_exp_mse", "combined_mse", "linear_noise_var",
        "squared_exp_lengthscale", "combined_beta",
    ];
    csv_text(
        &header,
        report.distributions.iter().filter_map(|d| {
            let c = d.comparison.as_ref()?;
            let k = d.key;
            Some(vec![
                k.site.to_string(),
                k.lead.to_string(),
                k.region.to_string(),
                k.control.to_string(),
                fmt_num(c.linear.mse),
                fmt_num(c.squared_exp.mse),
                fmt_num(c.combined.mse),
                fmt_num(c.linear.theta.noise_var),
                fmt_num(c.squared_exp.theta.lengthscale),
                fmt_num(c.combined.theta.beta),
            ])
        }),
    )
}

pub fn cv_csv(report: &AnalysisReport) -> Result<String> {
    let header = ["site", "lead", "region", "control", "fold", "mse", "min", "avg", "max"];
    let mut rows = Vec::new();
    for d in &report.distributions {
        let Some(cv) = &d.cv else { continue };
        let k = d.key;
        for (i, m) in cv.per_fold_mse.iter().enumerate() {
            rows.push(vec![
                k.site.to_string(),
                k.lead.to_string(),
                k.region.to_string(),
                k.control.to_string(),
                i.to_string(),
                fmt_num(*m),
                fmt_num(cv.min),
                fmt_num(cv.avg),
                fmt_num(cv.max),
            ]);
        }
    }
    csv_text(&header, rows)
}

pub fn svd_csv(report: &AnalysisReport) -> Result<String> {
    let header = [
        "site", "lead", "region", "units", "j", "sigma", "u_accel", "u_ang_vel", "v_rel_lat", "v_rel_lon", "v_dev_lat",
        "v_dev_lon",
    ];
    let mut rows = Vec::new();
    for g in &report.gains {
        for (units, svd) in [("normalized", &g.svd_normalized), ("raw", &g.svd_raw)] {
            for j in 0..2 {
                let u = svd.u_column(j);
                let mut row = vec![
                    g.site.to_string(),
                    g.lead.to_string(),
                    g.region.to_string(),
                    units.to_string(),
                    (j + 1).to_string(),
                    fmt_num(svd.sigma[j]),
                    fmt_num(u[0]),
                    fmt_num(u[1]),
                ];
                row.extend(nums(&svd.v_rows[j]));
                rows.push(row);
            }
        }
    }
    csv_text(&header, rows)
}

pub fn permutation_csv(report: &AnalysisReport) -> Result<String> {
    let header =
        ["comparison", "region", "control", "component", "statistic", "n_a", "n_b", "observed", "p_value", "permutations"];
    csv_text(
        &header,
        report.permutation_tests.iter().map(|p| {
            vec![
                p.comparison.clone(),
                p.region.to_string(),
                p.control.to_string(),
                p.component.clone(),
                p.result.statistic_kind.name().to_string(),
                p.n_a.to_string(),
                p.n_b.to_string(),
                fmt_num(p.result.statistic_observed),
                fmt_num(p.result.p_value),
                p.result.n_permutations.to_string(),
            ]
        }),
    )
}

/// Per-driver gain scatter data: one file per control and feature pair, with
/// `x` and `y` the raw gains on the lateral and longitudinal component.
pub fn plot_csvs(report: &AnalysisReport) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for control in Control::ALL {
        for (pair, cols) in [("relative", [0, 1]), ("deviation", [2, 3])] {
            let header = ["site", "lead", "region", "trial_id", "agent", "x", "y"];
            let rows = report.drivers.iter().filter(|d| d.key.distribution.control == control).map(|d| {
                let k = &d.key.distribution;
                vec![
                    k.site.to_string(),
                    k.lead.to_string(),
                    k.region.to_string(),
                    d.key.trial_id.clone(),
                    d.key.agent.to_string(),
                    fmt_num(d.gain_raw[cols[0]]),
                    fmt_num(d.gain_raw[cols[1]]),
                ]
            });
            out.insert(format!("{control}_{pair}.csv"), csv_text(&header, rows)?);
        }
    }
    Ok(out)
}

/// Plain-text table of every distribution: MSE, beta and the raw gain.
pub fn render_table(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<32} {:>7} {:>11} {:>10} {:>5}  {:>11} {:>11} {:>11} {:>11}",
        "distribution", "n", "mse", "beta", "lin", "rel_lat", "rel_lon", "dev_lat", "dev_lon"
    );
    for d in &report.distributions {
        let g = d.gain_raw;
        let _ = writeln!(
            s,
            "{:<32} {:>7} {:>11.3e} {:>10.3e} {:>5}  {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}",
            d.key.label(),
            d.n_samples,
            d.mse,
            d.theta.beta,
            if d.linear_adequate { "yes" } else { "no" },
            g[0],
            g[1],
            g[2],
            g[3]
        );
    }
    let s_ = &report.summary;
    let _ = writeln!(
        s,
        "\n{} trials, {} excluded, {} failed, {} samples, {} driver fits, {} permutation tests",
        s_.trials,
        s_.excluded.len(),
        s_.failed.len(),
        s_.samples,
        report.drivers.len(),
        report.permutation_tests.len()
    );
    let significant: Vec<_> = report.permutation_tests.iter().filter(|p| p.result.p_value <= 0.05).collect();
    for p in significant {
        let _ = writeln!(
            s,
            "  {} {} {} {} {}: p = {:.4}",
            p.comparison,
            p.region,
            p.control,
            p.component,
            p.result.statistic_kind.name(),
            p.result.p_value
        );
    }
    s
}
