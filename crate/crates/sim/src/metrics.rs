//! Simulation metrics: the raw event journal, summaries derived from it,
//! and the self-consistency check that recomputes summaries from events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One journal row. `value` and `subject` are event-specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub time_ns: u64,
    pub peer: usize,
    pub kind: String,
    pub subject: String,
    pub value: f64,
}

pub const EV_CONTRIBUTION_APPENDED: &str = "contribution_appended";
pub const EV_CONTRIBUTION_COMPLETE: &str = "contribution_complete";
pub const EV_JOIN_STARTED: &str = "join_started";
pub const EV_BOOTSTRAP_DONE: &str = "bootstrap_done";
pub const EV_VALIDATION_COST: &str = "validation_cost";
pub const EV_VOTE_RESPONSE_LATENCY: &str = "vote_response_latency";
pub const EV_PEER_DOWN: &str = "peer_down";
pub const EV_PEER_UP: &str = "peer_up";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReplication {
    pub count: u64,
    pub avg_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub contributions: u64,
    pub unconverged: u64,
    /// Per-contribution time until every live peer held the data.
    pub all_peer_p50_ms: f64,
    pub all_peer_p99_ms: f64,
    pub all_peer_max_ms: f64,
    pub fraction_under_1s: f64,
    pub per_region: BTreeMap<String, RegionReplication>,
    /// Mean coefficient of variation of per-peer replication times within a
    /// region vs across regions.
    pub intra_region_cv: f64,
    pub cross_region_cv: f64,
    /// Replication time per payload size (transfer scenarios).
    pub per_size_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinRecord {
    pub join_index: usize,
    pub peer: usize,
    pub region: String,
    pub cluster_size: usize,
    pub bootstrap_ms: f64,
    pub first_in_region: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub joins: Vec<JoinRecord>,
    pub spearman_join_vs_time: f64,
    pub median_first_in_region_ms: f64,
    /// Joins with a same-region predecessor, limited to the rotation right
    /// after the last first-in-region join (comparable cluster sizes).
    pub median_with_region_peer_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub n_points: u64,
    pub batched_ms: f64,
    pub unbatched_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub cost_table: Vec<CostRow>,
    pub query_latencies_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario_kind: String,
    pub seed: u64,
    pub peer_count: usize,
    pub peer_regions: Vec<String>,
    pub sim_end_ms: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replication: Option<ReplicationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSummary>,
}

/// The full result of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub events: Vec<EventRow>,
    pub summary: Summary,
}

impl MetricsReport {
    pub fn events_csv(&self) -> String {
        let mut out = String::from("time_ns,peer,event,subject,value\n");
        for row in &self.events {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.time_ns, row.peer, row.kind, row.subject, row.value
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }

    pub fn write_to_dir(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("events.csv"), self.events_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }
}

/// Recompute the summary from the raw events and compare: true iff the
/// stored summary is exactly what the events imply.
pub fn replay_check(report: &MetricsReport) -> bool {
    let recomputed = compute_summary(
        &report.summary.scenario_kind,
        report.summary.seed,
        &report.summary.peer_regions,
        report.summary.sim_end_ms,
        report.summary.converged,
        &report.events,
    );
    recomputed == report.summary
}

/// Build the summary from the event journal. Used both when a run finishes
/// and by [`replay_check`], so the two can only agree.
pub fn compute_summary(
    scenario_kind: &str,
    seed: u64,
    peer_regions: &[String],
    sim_end_ms: f64,
    converged: bool,
    events: &[EventRow],
) -> Summary {
    let replication = compute_replication(peer_regions, events);
    let bootstrap = compute_bootstrap(peer_regions, events);
    let validation = compute_validation(events);
    Summary {
        scenario_kind: scenario_kind.to_string(),
        seed,
        peer_count: peer_regions.len(),
        peer_regions: peer_regions.to_vec(),
        sim_end_ms,
        converged,
        replication,
        bootstrap,
        validation,
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    if m == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    var.sqrt() / m
}

fn median(values: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn compute_replication(peer_regions: &[String], events: &[EventRow]) -> Option<ReplicationSummary> {
    // subject -> (append time, appender, payload size)
    let mut appended: BTreeMap<&str, (u64, usize, f64)> = BTreeMap::new();
    // subject -> peer -> completion time
    let mut completions: BTreeMap<&str, BTreeMap<usize, u64>> = BTreeMap::new();
    for row in events {
        match row.kind.as_str() {
            EV_CONTRIBUTION_APPENDED => {
                appended.insert(&row.subject, (row.time_ns, row.peer, row.value));
            }
            EV_CONTRIBUTION_COMPLETE => {
                completions.entry(&row.subject).or_default().insert(row.peer, row.time_ns);
            }
            _ => {}
        }
    }
    if appended.is_empty() {
        return None;
    }

    let mut all_peer_times = Vec::new();
    let mut unconverged = 0u64;
    let mut per_region_samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut per_size_samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut intra_cvs = Vec::new();
    let mut cross_cvs = Vec::new();

    for (subject, (t0, _appender, size)) in &appended {
        let Some(peers) = completions.get(subject) else {
            unconverged += 1;
            continue;
        };
        // Every peer that reported completion counts; the run marks overall
        // convergence separately.
        let mut worst = 0u64;
        let mut region_samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (peer, t) in peers {
            let dt_ms = (t.saturating_sub(*t0)) as f64 / 1e6;
            worst = worst.max(t.saturating_sub(*t0));
            let region = peer_regions.get(*peer).map(|s| s.as_str()).unwrap_or("?");
            region_samples.entry(region).or_default().push(dt_ms);
            per_region_samples.entry(region).or_default().push(dt_ms);
        }
        let all_ms = worst as f64 / 1e6;
        all_peer_times.push(all_ms);
        per_size_samples.entry(format!("{}", *size as u64)).or_default().push(all_ms);

        // Homogeneity: variation of per-peer times within each region vs
        // across region means, per contribution.
        let region_means: Vec<f64> = region_samples.values().map(|v| mean(v)).collect();
        let intra: Vec<f64> =
            region_samples.values().filter(|v| v.len() >= 2).map(|v| coefficient_of_variation(v)).collect();
        if !intra.is_empty() && region_means.len() >= 2 {
            intra_cvs.push(mean(&intra));
            cross_cvs.push(coefficient_of_variation(&region_means));
        }
    }

    all_peer_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let under_1s = all_peer_times.iter().filter(|t| **t < 1000.0).count();
    let fraction_under_1s = if all_peer_times.is_empty() {
        0.0
    } else {
        under_1s as f64 / all_peer_times.len() as f64
    };

    let per_region = per_region_samples
        .into_iter()
        .map(|(region, samples)| {
            (
                region.to_string(),
                RegionReplication {
                    count: samples.len() as u64,
                    avg_ms: mean(&samples),
                    max_ms: samples.iter().fold(0.0f64, |m, v| m.max(*v)),
                },
            )
        })
        .collect();

    Some(ReplicationSummary {
        contributions: appended.len() as u64,
        unconverged,
        all_peer_p50_ms: percentile(&all_peer_times, 0.50),
        all_peer_p99_ms: percentile(&all_peer_times, 0.99),
        all_peer_max_ms: all_peer_times.last().copied().unwrap_or(0.0),
        fraction_under_1s,
        per_region,
        intra_region_cv: mean(&intra_cvs),
        cross_region_cv: mean(&cross_cvs),
        per_size_ms: per_size_samples
            .into_iter()
            .map(|(size, samples)| (size, samples.iter().fold(0.0f64, |m, v| m.max(*v))))
            .collect(),
    })
}

fn compute_bootstrap(peer_regions: &[String], events: &[EventRow]) -> Option<BootstrapSummary> {
    let mut join_started: BTreeMap<usize, (u64, usize)> = BTreeMap::new(); // peer -> (t, cluster)
    let mut joins = Vec::new();
    let mut seen_regions: BTreeMap<&str, usize> = BTreeMap::new();
    // The root's region is populated from the start.
    if let Some(root_region) = peer_regions.first() {
        seen_regions.insert(root_region, 0);
    }
    let mut join_index = 0usize;
    for row in events {
        match row.kind.as_str() {
            EV_JOIN_STARTED => {
                join_started.insert(row.peer, (row.time_ns, row.value as usize));
            }
            EV_BOOTSTRAP_DONE => {
                let Some((_, cluster_size)) = join_started.get(&row.peer) else { continue };
                join_index += 1;
                let region = peer_regions.get(row.peer).map(|s| s.as_str()).unwrap_or("?");
                let first_in_region = !seen_regions.contains_key(region);
                *seen_regions.entry(region).or_insert(0) += 1;
                joins.push(JoinRecord {
                    join_index,
                    peer: row.peer,
                    region: region.to_string(),
                    cluster_size: *cluster_size,
                    bootstrap_ms: row.value,
                    first_in_region,
                });
            }
            _ => {}
        }
    }
    if joins.is_empty() {
        return None;
    }

    let xs: Vec<f64> = joins.iter().map(|j| j.join_index as f64).collect();
    let ys: Vec<f64> = joins.iter().map(|j| j.bootstrap_ms).collect();
    let spearman = spearman_rank_correlation(&xs, &ys);

    let mut first: Vec<f64> =
        joins.iter().filter(|j| j.first_in_region).map(|j| j.bootstrap_ms).collect();
    let last_first_index =
        joins.iter().filter(|j| j.first_in_region).map(|j| j.join_index).max().unwrap_or(0);
    // The comparable cohort: the next rotation of joins after the last
    // first-in-region join (cluster sizes within one region cycle).
    let mut with_peer: Vec<f64> = joins
        .iter()
        .filter(|j| !j.first_in_region)
        .filter(|j| j.join_index > last_first_index && j.join_index <= last_first_index + 6)
        .map(|j| j.bootstrap_ms)
        .collect();

    Some(BootstrapSummary {
        spearman_join_vs_time: spearman,
        median_first_in_region_ms: median(&mut first),
        median_with_region_peer_ms: median(&mut with_peer),
        joins,
    })
}

fn compute_validation(events: &[EventRow]) -> Option<ValidationSummary> {
    let mut by_n: BTreeMap<u64, (Option<f64>, Option<f64>)> = BTreeMap::new();
    let mut latencies = Vec::new();
    for row in events {
        match row.kind.as_str() {
            EV_VALIDATION_COST => {
                // subject is "n=<count>,batched" or "n=<count>,unbatched"
                let Some((n_part, mode)) = row.subject.split_once(',') else { continue };
                let Ok(n) = n_part.trim_start_matches("n=").parse::<u64>() else { continue };
                let slot = by_n.entry(n).or_default();
                match mode {
                    "batched" => slot.0 = Some(row.value),
                    "unbatched" => slot.1 = Some(row.value),
                    _ => {}
                }
            }
            EV_VOTE_RESPONSE_LATENCY => latencies.push(row.value),
            _ => {}
        }
    }
    if by_n.is_empty() && latencies.is_empty() {
        return None;
    }
    let cost_table = by_n
        .into_iter()
        .map(|(n_points, (batched, unbatched))| CostRow {
            n_points,
            batched_ms: batched.unwrap_or(0.0),
            unbatched_ms: unbatched.unwrap_or(0.0),
        })
        .collect();
    Some(ValidationSummary { cost_table, query_latencies_ms: latencies })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rank_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return 0.0;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut indexed: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    indexed.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < indexed.len() {
        let mut j = i;
        while j + 1 < indexed.len() && indexed[j + 1].1 == indexed[i].1 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[indexed[k].0] = avg_rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}
