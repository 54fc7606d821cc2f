//! Post-run analyses and CSV emission.
//!
//! CSV columns (fixed):
//! - `summary.csv`: mode, dataset, seed, champion_accuracy, budget[, reduction]
//! - `surrogate_quality.csv`: mode, dataset, seed, pairs, mse, kendall_tau, r_squared
//!   (one row per run plus a `mean` row per mode and dataset)
//! - `depth_series.csv`: mode, dataset, seed, generation, elite_fraction, elite_mean_layers
//! - `concat_report.csv`: mode, dataset, seed, rank, index, layer_count, concat_count, concat_fraction
//!
//! Missing values are written as empty fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{rank, Champion, Mode, RunResult};
use crate::error::{Error, Result};
use crate::management::{full_count, Budget};
use crate::metrics::SurrogateQuality;

pub fn surrogate_quality(run: &RunResult) -> SurrogateQuality {
    let pred: Vec<f64> = run.quality_pairs.iter().map(|p| p.predicted).collect();
    let actual: Vec<f64> = run.quality_pairs.iter().map(|p| p.actual).collect();
    SurrogateQuality::from_pairs(&pred, &actual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSeries {
    pub elite_fraction: f64,
    /// Mean evolved-layer count of each generation's elite; `None` when no
    /// elite decoded.
    pub means: Vec<Option<f64>>,
}

/// Elites are the top ⌈fraction·P⌉ by stored fitness, ties to lower index.
pub fn depth_series(run: &RunResult, elite_fraction: f64) -> DepthSeries {
    let means = run
        .generations
        .iter()
        .map(|g| {
            let k = full_count(elite_fraction, g.individuals.len()).max(1);
            let layers: Vec<f64> = rank(&g.individuals)[..k.min(g.individuals.len())]
                .iter()
                .filter_map(|&i| g.individuals[i].stats.map(|s| s.layer_count as f64))
                .collect();
            (!layers.is_empty()).then(|| layers.iter().sum::<f64>() / layers.len() as f64)
        })
        .collect();
    DepthSeries {
        elite_fraction,
        means,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatEntry {
    pub rank: usize,
    pub index: usize,
    pub layer_count: Option<usize>,
    pub concat_count: Option<usize>,
    pub concat_fraction: Option<f64>,
}

/// CONCAT share of each final-generation elite, best first.
pub fn concat_report(run: &RunResult) -> Vec<ConcatEntry> {
    let Some(last) = run.generations.last() else {
        return Vec::new();
    };
    let k = full_count(run.config.elite_fraction, last.individuals.len()).max(1);
    rank(&last.individuals)
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(r, i)| {
            let s = last.individuals[i].stats;
            ConcatEntry {
                rank: r + 1,
                index: last.individuals[i].index,
                layer_count: s.map(|s| s.layer_count),
                concat_count: s.map(|s| s.concat_count),
                concat_fraction: s.map(|s| s.concat_fraction),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub mode: Mode,
    pub dataset: String,
    pub seed: u64,
    /// Epoch-equivalents spent by the search.
    pub budget: usize,
    pub reduction: Option<f64>,
}

/// Reduction relative to an expensive run, preferring one with the same
/// dataset and seed.
pub fn budget_report(runs: &[RunResult], require_reference: bool) -> Result<Vec<BudgetRow>> {
    let expensive: Vec<&RunResult> = runs.iter().filter(|r| r.mode() == Mode::Expensive).collect();
    if require_reference && expensive.is_empty() {
        return Err(Error::Config(
            "budget reduction needs an expensive run among the inputs".into(),
        ));
    }
    Ok(runs
        .iter()
        .map(|r| {
            let reference = expensive
                .iter()
                .find(|e| e.dataset == r.dataset && e.config.seed == r.config.seed)
                .or(expensive.first());
            let budget = r.budget.evolution();
            BudgetRow {
                mode: r.mode(),
                dataset: r.dataset.clone(),
                seed: r.config.seed,
                budget,
                reduction: reference
                    .filter(|_| require_reference)
                    .map(|e| 1.0 - budget as f64 / e.budget.evolution() as f64),
            }
        })
        .collect())
}

/// Everything in `summary.json`; deliberately free of timing so it is
/// byte-identical across worker counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub dataset: String,
    pub seed: u64,
    pub champion: Option<Champion>,
    pub best_per_generation: Vec<f64>,
    pub best_true_per_generation: Vec<Option<f64>>,
    pub budget: Budget,
    pub evolution_budget: usize,
    pub surrogate_quality: SurrogateQuality,
    pub archive_size: usize,
    pub fit_failures: usize,
}

impl Summary {
    pub fn of(run: &RunResult) -> Summary {
        Summary {
            mode: run.mode(),
            dataset: run.dataset.clone(),
            seed: run.config.seed,
            champion: run.champion.clone(),
            best_per_generation: run.best_per_generation(),
            best_true_per_generation: run.best_true_per_generation(),
            budget: run.budget,
            evolution_budget: run.budget.evolution(),
            surrogate_quality: surrogate_quality(run),
            archive_size: run.archive_size,
            fit_failures: run.fit_failures,
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 6] = ["mode", "dataset", "seed", "champion_accuracy", "budget", "reduction"];
pub const QUALITY_HEADER: [&str; 7] = ["mode", "dataset", "seed", "pairs", "mse", "kendall_tau", "r_squared"];
pub const DEPTH_HEADER: [&str; 6] = ["mode", "dataset", "seed", "generation", "elite_fraction", "elite_mean_layers"];
pub const CONCAT_HEADER: [&str; 8] = [
    "mode",
    "dataset",
    "seed",
    "rank",
    "index",
    "layer_count",
    "concat_count",
    "concat_fraction",
];

/// Writes the four report CSVs into `out`. Without a reference run the
/// summary has no reduction column.
pub fn write_reports(runs: &[RunResult], out: &Path, with_reference: bool) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let budgets = budget_report(runs, with_reference)?;
    let header = if with_reference {
        &SUMMARY_HEADER[..]
    } else {
        &SUMMARY_HEADER[..5]
    };
    let rows = runs
        .iter()
        .zip(&budgets)
        .map(|(r, b)| {
            let mut row = vec![
                r.mode().to_string(),
                r.dataset.clone(),
                r.config.seed.to_string(),
                opt(r.champion.as_ref().map(|c| c.report_accuracy)),
                b.budget.to_string(),
            ];
            if with_reference {
                row.push(opt(b.reduction));
            }
            row
        })
        .collect();
    write_rows(&out.join("summary.csv"), header, rows)?;

    let mut rows = Vec::new();
    let mut groups: Vec<(Mode, String, Vec<SurrogateQuality>)> = Vec::new();
    for r in runs {
        let q = surrogate_quality(r);
        rows.push(vec![
            r.mode().to_string(),
            r.dataset.clone(),
            r.config.seed.to_string(),
            q.pairs.to_string(),
            opt(q.mse),
            opt(q.kendall_tau),
            opt(q.r_squared),
        ]);
        match groups.iter_mut().find(|(m, d, _)| *m == r.mode() && *d == r.dataset) {
            Some(g) => g.2.push(q),
            None => groups.push((r.mode(), r.dataset.clone(), vec![q])),
        }
    }
    for (mode, dataset, qs) in groups {
        let mean = |f: fn(&SurrogateQuality) -> Option<f64>| {
            let v: Vec<f64> = qs.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        rows.push(vec![
            mode.to_string(),
            dataset,
            "mean".into(),
            qs.iter().map(|q| q.pairs).sum::<usize>().to_string(),
            opt(mean(|q| q.mse)),
            opt(mean(|q| q.kendall_tau)),
            opt(mean(|q| q.r_squared)),
        ]);
    }
    write_rows(&out.join("surrogate_quality.csv"), &QUALITY_HEADER, rows)?;

    let mut rows = Vec::new();
    for r in runs {
        let series = depth_series(r, r.config.elite_fraction);
        for (g, m) in r.generations.iter().zip(&series.means) {
            rows.push(vec![
                r.mode().to_string(),
                r.dataset.clone(),
                r.config.seed.to_string(),
                g.generation.to_string(),
                series.elite_fraction.to_string(),
                opt(*m),
            ]);
        }
    }
    write_rows(&out.join("depth_series.csv"), &DEPTH_HEADER, rows)?;

    let mut rows = Vec::new();
    for r in runs {
        for e in concat_report(r) {
            rows.push(vec![
                r.mode().to_string(),
                r.dataset.clone(),
                r.config.seed.to_string(),
                e.rank.to_string(),
                e.index.to_string(),
                opt(e.layer_count),
                opt(e.concat_count),
                opt(e.concat_fraction),
            ]);
        }
    }
    write_rows(&out.join("concat_report.csv"), &CONCAT_HEADER, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::GraphStats;
    use crate::engine::{GenerationRecord, RunConfig, Timing};
    use crate::genotype::Genotype;
    use crate::management::{EvaluatedIndividual, FitnessKind, PairSource, QualityPair};

    fn ind(index: usize, fitness: f64, layers: usize, concats: usize) -> EvaluatedIndividual {
        EvaluatedIndividual {
            generation: 1,
            index,
            genotype: Genotype::default(),
            seed: 0,
            elite: false,
            stats: Some(GraphStats {
                layer_count: layers,
                concat_count: concats,
                concat_fraction: concats as f64 / layers as f64,
            }),
            semantics_partial: vec![],
            partial_accuracy: fitness,
            fitness,
            fitness_kind: FitnessKind::TrueFull,
            predicted: None,
            ei: None,
            epochs_charged: 30,
        }
    }

    fn run_of(mode: Mode, gens: Vec<Vec<EvaluatedIndividual>>, full: usize) -> RunResult {
        RunResult {
            config: RunConfig {
                mode,
                pop_size: 5,
                ..Default::default()
            },
            dataset: "fixture".into(),
            generations: gens
                .into_iter()
                .enumerate()
                .map(|(g, individuals)| GenerationRecord {
                    generation: g + 1,
                    individuals,
                    best_fitness: 0.0,
                    best_true_fitness: None,
                    archive_size: 0,
                    budget: Budget::default(),
                })
                .collect(),
            pool: vec![],
            champion: None,
            budget: Budget {
                full,
                ..Default::default()
            },
            quality_pairs: vec![],
            archive_size: 0,
            fit_failures: 0,
            timing: Timing::default(),
        }
    }

    /// Two generations of five; elite fraction 0.2 keeps one, 0.4 keeps two.
    fn fixture() -> RunResult {
        run_of(
            Mode::Expensive,
            vec![
                vec![ind(0, 0.5, 4, 1), ind(1, 0.9, 8, 2), ind(2, 0.7, 6, 0), ind(3, 0.9, 3, 1), ind(4, 0.1, 20, 5)],
                vec![ind(0, 0.95, 10, 5), ind(1, 0.6, 2, 0), ind(2, 0.95, 7, 1), ind(3, 0.8, 5, 1), ind(4, 0.2, 9, 3)],
            ],
            900,
        )
    }

    #[test]
    fn depth_series_by_hand() {
        let run = fixture();
        // Gen 1 ranking: 1 (0.9), 3 (0.9, higher index), 2, 0, 4.
        assert_eq!(depth_series(&run, 0.2).means, vec![Some(8.0), Some(10.0)]);
        assert_eq!(depth_series(&run, 0.4).means, vec![Some(5.5), Some(8.5)]);
        assert_eq!(depth_series(&run, 0.6).means, vec![Some(17.0 / 3.0), Some(22.0 / 3.0)]);
        let single = run_of(Mode::Expensive, vec![vec![ind(0, 0.4, 6, 0); 5]], 0);
        assert_eq!(depth_series(&single, 0.4).means, vec![Some(6.0)]);
    }

    #[test]
    fn depth_series_ignores_monotone_rescaling() {
        let run = fixture();
        let mut warped = run.clone();
        for g in &mut warped.generations {
            for i in &mut g.individuals {
                i.fitness = (3.0 * i.fitness).exp();
            }
        }
        assert_eq!(depth_series(&run, 0.4), depth_series(&warped, 0.4));
    }

    #[test]
    fn concat_report_by_hand() {
        let run = fixture();
        let rep = concat_report(&run);
        assert_eq!(rep.len(), 1);
        assert_eq!(rep[0].index, 0);
        assert_eq!(rep[0].concat_fraction, Some(0.5));
        let mut wider = fixture();
        wider.config.elite_fraction = 0.4;
        let rep = concat_report(&wider);
        assert_eq!(rep.iter().map(|e| e.index).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(rep[1].concat_fraction, Some(1.0 / 7.0));
    }

    #[test]
    fn budget_reductions() {
        let exp = run_of(Mode::Expensive, vec![], 900);
        let sur = run_of(Mode::Surrogate, vec![], 660);
        let mut ps = run_of(Mode::SurrogatePs, vec![], 660);
        ps.budget.pool = 300;
        let rows = budget_report(&[exp.clone(), sur.clone(), ps.clone()], true).unwrap();
        assert_eq!(rows[0].reduction, Some(0.0));
        assert!((rows[1].reduction.unwrap() - (1.0 - 660.0 / 900.0)).abs() < 1e-15);
        assert!((rows[1].reduction.unwrap() - 0.2667).abs() < 1e-4);
        assert!((rows[2].reduction.unwrap() + 0.0667).abs() < 1e-4);
        assert!(budget_report(std::slice::from_ref(&sur), true).is_err());
        let bare = budget_report(&[sur], false).unwrap();
        assert_eq!(bare[0].budget, 660);
        assert!(bare[0].reduction.is_none());
    }

    #[test]
    fn quality_from_pairs() {
        let mut run = fixture();
        assert_eq!(surrogate_quality(&run).pairs, 0);
        assert!(surrogate_quality(&run).kendall_tau.is_none());
        run.quality_pairs = (0..5)
            .map(|i| QualityPair {
                generation: 2,
                index: i,
                source: PairSource::Audit,
                predicted: i as f64 / 10.0,
                actual: i as f64 / 10.0,
            })
            .collect();
        let q = surrogate_quality(&run);
        assert_eq!(q.pairs, 5);
        assert_eq!(q.mse, Some(0.0));
        assert_eq!(q.kendall_tau, Some(1.0));
    }

    #[test]
    fn csv_headers_and_reference_column() {
        let dir = tempfile::tempdir().unwrap();
        let runs = [fixture(), run_of(Mode::Surrogate, vec![vec![ind(0, 0.5, 4, 1)]], 660)];
        write_reports(&runs, dir.path(), true).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
        assert_eq!(rd.headers().unwrap(), SUMMARY_HEADER.to_vec());
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(&rows[1][4], "660");
        assert!(rows[1][5].starts_with("0.266"));
        for (file, header) in [
            ("surrogate_quality.csv", &QUALITY_HEADER[..]),
            ("depth_series.csv", &DEPTH_HEADER[..]),
            ("concat_report.csv", &CONCAT_HEADER[..]),
        ] {
            let mut rd = csv::Reader::from_path(dir.path().join(file)).unwrap();
            assert_eq!(rd.headers().unwrap(), header.to_vec());
            assert!(rd.records().all(|r| r.unwrap().len() == header.len()));
        }
        write_reports(&runs[1..], dir.path(), false).unwrap();
        let mut rd = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
        assert_eq!(rd.headers().unwrap(), SUMMARY_HEADER[..5].to_vec());
        assert!(write_reports(&runs[1..], dir.path(), true).is_err());
    }
}
