use windgain_core::dataset::Covariate;
use windgain_core::evaluation::BinSpec;
use windgain_core::kernel::KGridBounds;
use windgain_core::period2;
use windgain_core::synthgen::{self, FarmScenario};

#[test]
fn diag_gain() {
    let scenario = FarmScenario {
        n_p1: 600, n_p2: 600, seed: 11, upgrade_gamma: 1.10, shared_drift_kw: 20.0,
        ..Default::default()
    };
    let out = synthgen::generate(&scenario).unwrap();
    let ds = windgain_core::dataset::align(&out.reference, &out.baseline, &out.neutral, out.truth.boundary, 600).unwrap();
    let bins = BinSpec { width_kw: 100.0, min_count: 5 };
    let pi = period2::empirical_power_frequency(&ds.p1().iter().map(|r| r.y_ctrb).collect::<Vec<_>>(), 100.0);
    let aep = period2::HOURS_PER_YEAR * ds.p1().iter().map(|r| r.y_ctrb).sum::<f64>() / ds.p1().len() as f64;
    println!("aep={aep:.0} suggested={:.0}", out.truth.suggested_aep_kwh);
    let report = period2::analyze_gain(&ds, &[Covariate::WindSpeed, Covariate::NeutralPower], 42, &KGridBounds::new(4, 24), bins, &pi, aep, None).unwrap();
    println!("gain={:.4} coverage={:.3}", report.annualized.gain_fraction, report.annualized.pi_coverage);
    for b in &report.gain_curves.bins {
        println!("bin {:>5}: effect {:>8.2} offset {:>8.2} gain {:>8.2} count {:>4} pi {:>6.1}", b.bin_mid, b.effect, b.offset, b.gain, b.count, pi.hours_for(b.bin_id));
    }
    for e in &report.gain_curves.excluded {
        println!("excluded {:>5}: missing {:?} pi {:>6.1}", e.bin_mid, e.missing_from, pi.hours_for(e.bin_id));
    }
}
