use peerperfnet_sim::{run_scenario, Scenario};
fn main() {
    let mut scenario = Scenario::bootstrap_scaling(5);
    scenario.peer_regions.truncate(13);
    scenario.join_count = 12;
    scenario.prepopulate_files = 40;
    let report = run_scenario(&scenario).unwrap();
    let bs = report.summary.bootstrap.unwrap();
    for j in &bs.joins {
        println!("join {:2} peer {:2} {:22} cluster {:2} first_in_region {:5} -> {:.1} ms",
            j.join_index, j.peer, j.region, j.cluster_size, j.first_in_region, j.bootstrap_ms);
    }
    println!("spearman {}", bs.spearman_join_vs_time);
    println!("sim_end {} converged {}", report.summary.sim_end_ms, report.summary.converged);
}
