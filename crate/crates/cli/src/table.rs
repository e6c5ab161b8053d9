//! Per-step result rows, their CSV form, and per-evaluation summaries.

use std::io::{Read, Write};
use std::path::Path;

use crate::RunError;

pub const HEADER: [&str; 10] = [
    "t",
    "trial",
    "algo",
    "loss_raw",
    "loss_clipped",
    "chosen_level",
    "knn_err",
    "nmi",
    "gamma_cum",
    "regret_cum",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: u64,
    pub trial: u64,
    pub algo: String,
    pub loss_raw: f64,
    pub loss_clipped: f64,
    pub chosen_level: Option<u32>,
    pub knn_err: Option<f64>,
    pub nmi: Option<f64>,
    pub gamma_cum: Option<f64>,
    pub regret_cum: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub rows: Vec<Row>,
}

/// Formats `v` with 9 significant digits, dropping trailing zeros.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    // the exponent is taken after rounding, which may carry into the next decade
    let sci = format!("{:.8e}", v);
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let e: i32 = e.parse().expect("integer exponent");
    if (-5..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        let fixed = format!("{:.*}", decimals, v);
        trim_zeros(&fixed)
    } else {
        format!("{}e{}", trim_zeros(mantissa), e)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

impl Table {
    /// Sorts by `(trial, t)`, keeping the given algorithm order within a
    /// step.
    pub fn sort(&mut self, algo_order: &[String]) {
        let rank = |a: &str| algo_order.iter().position(|n| n == a).unwrap_or(usize::MAX);
        self.rows.sort_by(|a, b| (a.trial, a.t, rank(&a.algo)).cmp(&(b.trial, b.t, rank(&b.algo))));
    }

    pub fn algorithms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.algo) {
                out.push(r.algo.clone());
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.trial.to_string(),
                r.algo.clone(),
                fmt_sig(r.loss_raw),
                fmt_sig(r.loss_clipped),
                opt(r.chosen_level, |l| l.to_string()),
                opt(r.knn_err, fmt_sig),
                opt(r.nmi, fmt_sig),
                opt(r.gamma_cum, fmt_sig),
                opt(r.regret_cum, fmt_sig),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Table, RunError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().ne(HEADER) {
            return Err(RunError::Format(format!("results header must be {}", HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |field: &str| RunError::Format(format!("line {line}: bad {field}"));
            let num = |i: usize| -> Result<Option<f64>, RunError> {
                let s = rec[i].trim();
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(HEADER[i]))
                }
            };
            rows.push(Row {
                t: rec[0].trim().parse().map_err(|_| bad("t"))?,
                trial: rec[1].trim().parse().map_err(|_| bad("trial"))?,
                algo: rec[2].to_string(),
                loss_raw: num(3)?.ok_or_else(|| bad("loss_raw"))?,
                loss_clipped: num(4)?.ok_or_else(|| bad("loss_clipped"))?,
                chosen_level: match rec[5].trim() {
                    "" => None,
                    s => Some(s.parse().map_err(|_| bad("chosen_level"))?),
                },
                knn_err: num(6)?,
                nmi: num(7)?,
                gamma_cum: num(8)?,
                regret_cum: num(9)?,
            });
        }
        Ok(Table { rows })
    }

    pub fn emit_csv(&self, path: &Path) -> Result<(), RunError> {
        if self.rows.is_empty() {
            return Err(RunError::Format("refusing to write an empty results table".into()));
        }
        let file = std::fs::File::create(path).map_err(|e| RunError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Table, RunError> {
        let file = std::fs::File::open(path).map_err(|e| RunError::io(path, e))?;
        Table::read_csv(std::io::BufReader::new(file))
    }

    /// Aggregates the evaluation rows over trials.
    pub fn summarize(&self, nmi_threshold: f64) -> Summary {
        let mut rows: Vec<SummaryRow> = Vec::new();
        let algos = self.algorithms();
        for algo in &algos {
            let mut ts: Vec<u64> = self.rows.iter().filter(|r| &r.algo == algo && r.knn_err.is_some()).map(|r| r.t).collect();
            ts.sort_unstable();
            ts.dedup();
            for t in ts {
                let at: Vec<&Row> = self.rows.iter().filter(|r| &r.algo == algo && r.t == t).collect();
                let knn: Vec<f64> = at.iter().filter_map(|r| r.knn_err).collect();
                let nmi: Vec<f64> = at.iter().filter_map(|r| r.nmi).collect();
                let regret: Vec<f64> = at.iter().filter_map(|r| r.regret_cum).collect();
                let gamma: Vec<f64> = at.iter().filter_map(|r| r.gamma_cum).collect();
                let (knn_mean, knn_sd) = mean_sd(&knn);
                rows.push(SummaryRow {
                    algo: algo.clone(),
                    t,
                    trials: knn.len(),
                    knn_err_mean: knn_mean,
                    knn_err_sd: knn_sd,
                    nmi_mean: mean_sd(&nmi).0,
                    nmi_prob: if nmi.is_empty() {
                        f64::NAN
                    } else {
                        nmi.iter().filter(|&&v| v > nmi_threshold).count() as f64 / nmi.len() as f64
                    },
                    regret_cum_mean: mean_sd(&regret).0,
                    gamma_cum_mean: mean_sd(&gamma).0,
                });
            }
        }
        Summary { rows }
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algo: String,
    pub t: u64,
    pub trials: usize,
    pub knn_err_mean: f64,
    pub knn_err_sd: f64,
    pub nmi_mean: f64,
    /// Fraction of trials whose NMI exceeds the threshold.
    pub nmi_prob: f64,
    pub regret_cum_mean: f64,
    pub gamma_cum_mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn series<'a>(&'a self, algo: &'a str) -> impl Iterator<Item = &'a SummaryRow> {
        self.rows.iter().filter(move |r| r.algo == algo)
    }

    pub fn at(&self, algo: &str, t: u64) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.algo == algo && r.t == t)
    }

    pub fn last(&self, algo: &str) -> Option<&SummaryRow> {
        self.rows.iter().rfind(|r| r.algo == algo)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "algo",
            "t",
            "trials",
            "knn_err_mean",
            "knn_err_sd",
            "nmi_mean",
            "nmi_prob",
            "regret_cum_mean",
            "gamma_cum_mean",
        ])?;
        let f = |v: f64| if v.is_nan() { String::new() } else { fmt_sig(v) };
        for r in &self.rows {
            w.write_record([
                r.algo.clone(),
                r.t.to_string(),
                r.trials.to_string(),
                f(r.knn_err_mean),
                f(r.knn_err_sd),
                f(r.nmi_mean),
                f(r.nmi_prob),
                f(r.regret_cum_mean),
                f(r.gamma_cum_mean),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn emit_csv(&self, path: &Path) -> Result<(), RunError> {
        let file = std::fs::File::create(path).map_err(|e| RunError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
