//! Resumable accuracy-vs-FLOPS sweeps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use crate::flops::count_flops;
use crate::subband::{Architecture, ConcatVariant};
use crate::train::{run_trials, TrainingConfig};

use super::{model_from, usage, write_file, CliError, DataSource};

pub const SWEEP_SCHEMA: &str = "# subband-cnn sweep v1";
pub const SWEEP_HEADER: &str = "task,arch,variant,bands,K,flops,mult,params,trial_accs,mean_acc,stddev";

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub data: DataSource,
    pub training: TrainingConfig,
    pub archs: Vec<Architecture>,
    pub ks: Vec<usize>,
    pub variant: ConcatVariant,
    /// Band count for the sub-band architectures.
    pub bands: usize,
    pub trials: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub key: [String; 5],
    pub flops: u64,
    pub mult: u64,
    pub params: u64,
    /// `Ok(accuracies, mean, stddev)` or the failure message.
    pub result: Result<(Vec<f64>, f64, f64), String>,
}

impl SweepRow {
    pub fn is_complete(&self) -> bool {
        self.result.is_ok()
    }

    fn to_line(&self) -> String {
        let mut s = format!("{},{},{},{}", self.key.join(","), self.flops, self.mult, self.params);
        match &self.result {
            Ok((accs, mean, sd)) => {
                let accs: Vec<String> = accs.iter().map(|a| format!("{a:.6}")).collect();
                let _ = write!(s, ",{},{mean:.6},{sd:.6}", accs.join(";"));
            }
            Err(msg) => {
                let clean: String = msg.chars().map(|c| if c == ',' || c == '\n' { ';' } else { c }).collect();
                let _ = write!(s, ",FAILED: {clean},,");
            }
        }
        s
    }

    fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return None;
        }
        let key = [f[0], f[1], f[2], f[3], f[4]].map(str::to_owned);
        let result = match (f[9].parse::<f64>(), f[10].parse::<f64>()) {
            (Ok(mean), Ok(sd)) => {
                let accs = f[8].split(';').map(str::parse).collect::<Result<Vec<f64>, _>>().ok()?;
                Ok((accs, mean, sd))
            }
            _ => Err(f[8].trim_start_matches("FAILED: ").to_owned()),
        };
        Some(Self {
            key,
            flops: f[5].parse().ok()?,
            mult: f[6].parse().ok()?,
            params: f[7].parse().ok()?,
            result,
        })
    }
}

pub fn render(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_SCHEMA}\n{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

/// Rows of an existing results file keyed by their first five columns.
pub fn read_existing(text: &str) -> HashMap<[String; 5], SweepRow> {
    text.lines()
        .filter(|l| !l.starts_with('#') && *l != SWEEP_HEADER)
        .filter_map(SweepRow::parse)
        .map(|r| (r.key.clone(), r))
        .collect()
}

pub fn run_sweep(plan: &SweepPlan, w: &mut dyn Write) -> Result<(), CliError> {
    if plan.archs.is_empty() || plan.ks.is_empty() {
        return Err(usage("architecture and K lists must be nonempty"));
    }
    if plan.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let mut cells = Vec::new();
    for &arch in &plan.archs {
        for &k in &plan.ks {
            let sub = arch != Architecture::FullBand;
            let spec = model_from(
                arch,
                sub.then_some(plan.bands),
                k,
                (arch == Architecture::OverlappedSubband).then_some(plan.variant),
                crate::subband::PAPER_DROPOUT,
            )?;
            cells.push(spec);
        }
    }
    let existing = match std::fs::read_to_string(&plan.out) {
        Ok(t) => read_existing(&t),
        Err(_) => HashMap::new(),
    };
    let mut corpus = None;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(cells.len());
    for spec in &cells {
        let bands = spec.layout.as_ref().map_or(1, |l| l.len());
        let variant = if spec.arch == Architecture::OverlappedSubband { spec.concat.as_str() } else { "-" };
        let key = [
            plan.data.task.to_string(),
            spec.arch.to_string(),
            variant.to_owned(),
            bands.to_string(),
            spec.k.to_string(),
        ];
        if let Some(done) = existing.get(&key).filter(|r| r.is_complete()) {
            rows.push(done.clone());
            continue;
        }
        if corpus.is_none() {
            corpus = Some(plan.data.load()?);
        }
        let report = count_flops(spec);
        let result = run_trials(spec, corpus.as_ref().expect("loaded"), &plan.training, plan.trials)
            .map(|s| (s.accuracies, s.mean, s.stddev))
            .map_err(|e| e.to_string());
        match &result {
            Ok((_, mean, sd)) => {
                let _ = writeln!(w, "{} K={}: mean {mean:.4} stddev {sd:.4}", spec.arch, spec.k);
            }
            Err(e) => {
                let _ = writeln!(w, "{} K={}: FAILED {e}", spec.arch, spec.k);
            }
        }
        rows.push(SweepRow {
            key,
            flops: report.totals.flops,
            mult: report.totals.multiplications,
            params: report.totals.parameters,
            result,
        });
        let mut partial = rows.clone();
        partial.extend(existing.values().filter(|r| !rows.iter().any(|x| x.key == r.key)).cloned());
        write_file(&plan.out, &render(&partial))?;
    }
    write_file(&plan.out, &render(&rows))?;
    let failed = rows.iter().filter(|r| !r.is_complete()).count();
    let _ = writeln!(w, "{} rows in {} ({failed} failed)", rows.len(), plan.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_round_trip() {
        let ok = SweepRow {
            key: ["synthetic", "full_band", "-", "1", "8"].map(String::from),
            flops: 10,
            mult: 4,
            params: 3,
            result: Ok((vec![0.5, 0.75], 0.625, 0.17)),
        };
        let back = SweepRow::parse(&ok.to_line()).unwrap();
        assert_eq!(back.key, ok.key);
        assert!(back.is_complete());
        let bad = SweepRow {
            result: Err("non-finite loss, step 3".into()),
            ..ok
        };
        let back = SweepRow::parse(&bad.to_line()).unwrap();
        assert!(!back.is_complete());
        assert!(render(&[bad]).starts_with("# subband-cnn sweep v1\ntask,arch,variant,bands,K,"));
    }
}
