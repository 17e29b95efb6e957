// scratch probe, removed before finalizing
use groupcast_core::pipeline::trend_experiment;

#[test]
#[ignore]
fn probe() {
    let started = std::time::Instant::now();
    let report = trend_experiment(16, 130, 24, 42, None).unwrap();
    println!("elapsed: {:.1}s", started.elapsed().as_secs_f64());
    println!(
        "mean sMAPE {:.3} vs naive level {:.3}",
        report.mean_smape, report.naive_level_mean_smape
    );
    for r in &report.rows {
        println!(
            "{}: smape {:.3} naive {:.3} train_max {:.1} forecast_max {:.1} exceeds={}",
            r.series_id, r.smape, r.naive_level_smape, r.train_max, r.forecast_max, r.exceeds_training_max
        );
    }
}
