//! Analysis outputs: reward histograms, plan-execution consistency
//! matrices, and state/return scatter exports, all as documented CSV plus a
//! quick-look SVG where it helps.

use std::fs;
use std::path::Path;

use cdp_core::analysis::{
    consistency_matrix, dataset_scatter, records_scatter, reward_histogram, ScatterPoint,
};
use cdp_core::dataset::OfflineDataset;

use crate::error::{CliError, Result};
use crate::records_io::RecordsFile;
use crate::svg;

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))
}

/// `rewards.csv`: header `bin_lo,bin_hi,count`, one row per bin, plus
/// `rewards.svg`.
pub fn analyze_rewards(records: &RecordsFile, bins: usize, out_dir: &Path) -> Result<()> {
    let values: Vec<f64> = records
        .records
        .iter()
        .flat_map(|r| r.rewards.iter().copied())
        .collect();
    let h = reward_histogram(&values, bins)?;
    let width = if h.counts.is_empty() {
        0.0
    } else {
        (h.max - h.min) / h.counts.len() as f64
    };
    let mut csv = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let lo = h.min + i as f64 * width;
        let hi = if i + 1 == h.counts.len() {
            h.max
        } else {
            h.min + (i + 1) as f64 * width
        };
        csv.push_str(&format!("{lo},{hi},{c}\n"));
    }
    write(&out_dir.join("rewards.csv"), &csv)?;
    write(&out_dir.join("rewards.svg"), &svg::histogram_svg(&h))?;
    Ok(())
}

/// `consistency.csv`: header `episode,seed,lookahead_1..L`; truncated rows
/// leave trailing cells empty. A second file carries the column means.
pub fn analyze_consistency(records: &RecordsFile, lookahead: usize, out_dir: &Path) -> Result<()> {
    let m = consistency_matrix(&records.records, &records.spec, &records.norm, lookahead)?;
    let mut csv = String::from("episode,seed");
    for j in 1..=lookahead {
        csv.push_str(&format!(",lookahead_{j}"));
    }
    csv.push('\n');
    for (e, row) in m.rows.iter().enumerate() {
        csv.push_str(&format!("{e},{}", records.records[e].seed));
        for j in 0..lookahead {
            match row.get(j) {
                Some(v) => csv.push_str(&format!(",{v}")),
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    write(&out_dir.join("consistency.csv"), &csv)?;

    let mut means = String::from("lookahead,mean_similarity\n");
    let mut series = Vec::new();
    for j in 1..=lookahead {
        if let Some(v) = m.column_mean(j) {
            means.push_str(&format!("{j},{v}\n"));
            series.push((j as f64, v));
        }
    }
    write(&out_dir.join("consistency_means.csv"), &means)?;
    write(&out_dir.join("consistency.svg"), &svg::line_svg(&series))?;
    Ok(())
}

fn scatter_csv(points: &[ScatterPoint]) -> String {
    let mut csv = String::from("x,y,value\n");
    for p in points {
        csv.push_str(&format!("{},{},{}\n", p.x, p.y, p.value));
    }
    csv
}

/// `scatter.csv` from rollout records: visited states with their rewards.
pub fn analyze_scatter_records(records: &RecordsFile, out_dir: &Path) -> Result<()> {
    write(&out_dir.join("scatter.csv"), &scatter_csv(&records_scatter(&records.records)))
}

/// `scatter.csv` from a dataset: pool states with their per-state returns.
pub fn analyze_scatter_dataset(dataset: &OfflineDataset, out_dir: &Path) -> Result<()> {
    write(&out_dir.join("scatter.csv"), &scatter_csv(&dataset_scatter(dataset)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdp_core::dataset::{NormStats, WindowSpec};
    use cdp_core::planner::EpisodeRecord;

    fn records_fixture(rewards: Vec<f64>) -> RecordsFile {
        let spec = WindowSpec::new(2, 2, 1).unwrap();
        let n = rewards.len();
        RecordsFile {
            spec,
            rho: 0.1,
            fingerprint: "test".into(),
            norm: NormStats {
                state_mean: vec![0.0, 0.0],
                state_std: vec![1.0, 1.0],
                action_mean: vec![0.0],
                action_std: vec![1.0],
                v_min: 0.0,
                v_max: 1.0,
                floored_dims: vec![],
                degenerate_return_range: false,
            },
            records: vec![EpisodeRecord {
                seed: 5,
                states: (0..=n).map(|t| vec![0.1 * t as f64 + 0.1, 0.2]).collect(),
                actions: (0..n).map(|_| vec![0.0]).collect(),
                rewards,
                planned: (0..n).map(|_| vec![0.5; 9]).collect(),
                reached_done: false,
            }],
        }
    }

    #[test]
    fn rewards_csv_has_bin_rows_and_counts_sum() {
        let records = records_fixture(vec![0.0, 0.2, 0.4, 1.0, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        analyze_rewards(&records, 4, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("rewards.csv")).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 4);
        let total: u64 = rows
            .iter()
            .map(|r| r.split(',').nth(2).unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(total, 5);
        assert!(dir.path().join("rewards.svg").exists());
    }

    #[test]
    fn empty_records_give_header_only_scatter_and_zero_histogram() {
        let mut records = records_fixture(vec![]);
        records.records.clear();
        let dir = tempfile::tempdir().unwrap();
        analyze_scatter_records(&records, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
        assert_eq!(csv, "x,y,value\n");
        analyze_rewards(&records, 3, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("rewards.csv")).unwrap();
        for row in csv.lines().skip(1) {
            assert_eq!(row.split(',').nth(2).unwrap(), "0");
        }
    }

    #[test]
    fn consistency_csv_shape() {
        let records = records_fixture(vec![0.0, 0.0, 0.0]);
        let dir = tempfile::tempdir().unwrap();
        analyze_consistency(&records, 2, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("consistency.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "episode,seed,lookahead_1,lookahead_2");
        assert_eq!(lines.count(), 1);
        assert!(dir.path().join("consistency_means.csv").exists());
    }
}
