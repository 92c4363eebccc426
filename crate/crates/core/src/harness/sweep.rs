//! Predicted-versus-empirical raw-key rate over a parameter grid.

use serde::Serialize;

use super::config::{topology, ScenarioConfig, Scheme};
use super::report::{finish_csv_string, ReportError, ReportFormat};
use super::run::{run_trials, trial_seed, RateInterval, RunError, RunMode};
use crate::adversary::AttackPlan;

/// One grid cell: every star link at `p_t`, every detector at `p_d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub cell: usize,
    #[serde(rename = "M")]
    pub parties: usize,
    pub sample_ratio: f64,
    pub p_t: f64,
    pub p_d: f64,
    pub rounds_total: u64,
    pub kept_z_total: u64,
    pub empirical_rate: f64,
    pub predicted_rate: f64,
    pub sigma: f64,
    pub z_score: f64,
    pub within_3sigma: bool,
}

/// Run `base.trials` honest key-agreement trials of `base.rounds` rounds in
/// every cell of `base.sweep`. Cell `i` uses master seed `trial_seed(base.seed, i)`.
pub fn run_sweep(base: &ScenarioConfig) -> Result<Vec<SweepCell>, RunError> {
    if base.scheme != Scheme::Sifted {
        return Err(RunError::Config("sweeps run scheme 1 scenarios only".into()));
    }
    let grid = &base.sweep;
    let mut cells = Vec::new();
    for &parties in &grid.parties {
        for &sample_ratio in &grid.sample_ratio {
            for &p_t in &grid.p_t {
                for &p_d in &grid.p_d {
                    let index = cells.len();
                    let mut cfg = base.clone();
                    cfg.parties = parties;
                    cfg.sample_ratio = sample_ratio;
                    cfg.seed = trial_seed(base.seed, index);
                    cfg.attacks = AttackPlan::honest();
                    cfg.network = topology(Scheme::Sifted, parties);
                    for link in &mut cfg.network.links {
                        link.p_t = p_t;
                    }
                    for det in &mut cfg.network.detectors {
                        det.p_d = p_d;
                    }
                    let stats = run_trials(&cfg, RunMode::KeyGen)?;
                    let agg = &stats.aggregate;
                    let RateInterval {
                        sigma,
                        z_score,
                        within_3sigma,
                        ..
                    } = RateInterval::new(agg.empirical_rate, agg.predicted_rate, agg.rounds);
                    cells.push(SweepCell {
                        cell: index,
                        parties,
                        sample_ratio,
                        p_t,
                        p_d,
                        rounds_total: agg.rounds,
                        kept_z_total: agg.kept_z,
                        empirical_rate: agg.empirical_rate,
                        predicted_rate: agg.predicted_rate,
                        sigma,
                        z_score,
                        within_3sigma,
                    });
                }
            }
        }
    }
    Ok(cells)
}

#[derive(Serialize)]
struct SweepText<'a> {
    cell: &'a [SweepCell],
}

pub fn render_sweep(cells: &[SweepCell], format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Csv => finish_csv_string(cells),
        ReportFormat::Text => Ok(toml::to_string(&SweepText { cell: cells })?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::SweepGrid;

    #[test]
    fn small_grid_is_consistent() {
        let mut base = ScenarioConfig::sifted(3, 4000, 0.054, 11).with_trials(2);
        base.sweep = SweepGrid {
            parties: vec![3, 4],
            sample_ratio: vec![0.054],
            p_t: vec![1.0, 0.9],
            p_d: vec![0.8],
        };
        let cells = run_sweep(&base).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0].rounds_total, 8000);
        assert!(cells.iter().all(|c| c.z_score.abs() < 5.0));
        let csv = render_sweep(&cells, ReportFormat::Csv).unwrap();
        assert!(csv.starts_with(
            "cell,M,sample_ratio,p_t,p_d,rounds_total,kept_z_total,empirical_rate,predicted_rate,sigma,z_score,within_3sigma\n"
        ));
    }
}
