//! Evaluation reports and per-marginal histogram files.

use std::fmt::Write as _;
use std::path::Path;

use orderdomain::Order;

use crate::dist::ClassDistribution;
use crate::error::EvalError;

/// Natural-log likelihood of a uniform policy over the class space.
pub const NLL_BY_CHANCE: f64 = 9.457200455216768; // ln(12800)
/// Entropy in bits of a uniform policy over the class space.
pub const ENTROPY_BY_CHANCE: f64 = 13.64385618977472; // log2(12800)

pub const MARGINAL_NAMES: [&str; 5] = ["side", "action", "mo", "price", "volume"];

/// One per-field histogram: real vs. fake marginal probabilities plus raw
/// fake draw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalHistogram {
    pub name: &'static str,
    pub real: Vec<f64>,
    pub fake: Vec<f64>,
    pub fake_counts: Vec<u64>,
}

/// Divergences in bits (base-2), NLL in nats (natural log).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub kld: f64,
    pub mse: f64,
    pub nll_mean: f64,
    /// Mean over situations of the across-seed NLL standard deviation.
    pub nll_std_mean: f64,
    pub entropy_mean: f64,
    pub seeds: usize,
    pub situations: usize,
    pub fake_samples: u64,
    pub marginals: Vec<MarginalHistogram>,
}

fn marginal_sizes(name: &str) -> usize {
    match name {
        "price" | "volume" => 40,
        _ => 2,
    }
}

fn field_of(order_fields: (u8, u8, u8, u8, u8), name: &str) -> usize {
    match name {
        "side" => order_fields.0 as usize,
        "action" => order_fields.1 as usize,
        "mo" => order_fields.2 as usize,
        "price" => order_fields.3 as usize,
        "volume" => order_fields.4 as usize,
        _ => unreachable!("marginal name"),
    }
}

/// Projects a class distribution (and optionally fake counts) onto the five
/// field marginals.
pub fn marginals_of(
    real: &ClassDistribution,
    fake: &ClassDistribution,
    fake_counts: &[u64],
) -> Vec<MarginalHistogram> {
    MARGINAL_NAMES
        .iter()
        .map(|&name| {
            let size = marginal_sizes(name);
            let mut real_m = vec![0.0; size];
            let mut fake_m = vec![0.0; size];
            let mut counts_m = vec![0u64; size];
            for idx in 0..orderdomain::TOTAL_CLASSES {
                let fields = Order::fields_of_index(idx).expect("index in range");
                let class = field_of(fields, name);
                real_m[class] += real.prob(idx);
                fake_m[class] += fake.prob(idx);
                counts_m[class] += fake_counts[idx];
            }
            MarginalHistogram {
                name,
                real: real_m,
                fake: fake_m,
                fake_counts: counts_m,
            }
        })
        .collect()
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

impl EvalReport {
    /// Writes `report.txt` plus one `hist_<field>.csv` per marginal
    /// (`class,count,real_prob,fake_prob`).
    pub fn write_files(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        let mut text = String::new();
        let _ = writeln!(text, "# divergences in bits (log2); nll in nats (ln); inf marks a support violation");
        let _ = writeln!(text, "kld = {}", fmt_value(self.kld));
        let _ = writeln!(text, "mse = {}", fmt_value(self.mse));
        let _ = writeln!(text, "nll_mean = {}", fmt_value(self.nll_mean));
        let _ = writeln!(text, "nll_std_mean = {}", fmt_value(self.nll_std_mean));
        let _ = writeln!(text, "entropy_mean = {}", fmt_value(self.entropy_mean));
        let _ = writeln!(text, "seeds = {}", self.seeds);
        let _ = writeln!(text, "situations = {}", self.situations);
        let _ = writeln!(text, "fake_samples = {}", self.fake_samples);
        let _ = writeln!(text, "nll_by_chance = {NLL_BY_CHANCE}");
        let _ = writeln!(text, "entropy_by_chance = {ENTROPY_BY_CHANCE}");
        let path = dir.join("report.txt");
        std::fs::write(&path, text).map_err(|e| EvalError::io(&path, e))?;

        for m in &self.marginals {
            let mut csv = String::from("class,count,real_prob,fake_prob\n");
            for k in 0..m.real.len() {
                let _ = writeln!(csv, "{k},{},{},{}", m.fake_counts[k], m.real[k], m.fake[k]);
            }
            let path = dir.join(format!("hist_{}.csv", m.name));
            std::fs::write(&path, csv).map_err(|e| EvalError::io(&path, e))?;
        }
        Ok(())
    }

    /// Parses the flat key-value block written by `write_files`.
    pub fn read_keys(path: &Path) -> Result<Vec<(String, String)>, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        Ok(text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
            .filter_map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            })
            .collect())
    }
}
