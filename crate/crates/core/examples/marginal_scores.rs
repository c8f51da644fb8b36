//! Hyperrectangles: M-CP and CopulaCPTS from per-output quantiles.

use mocp::datagen::ToyProcess;
use mocp::metrics::marginal_coverage;
use mocp::models::ToyOracle;
use mocp::rng::{phase, RngStream};
use mocp::scores::{calibrate, MethodConfig, MethodId};

fn main() -> mocp::error::Result<()> {
    let process = ToyProcess::Unimodal;
    let model = ToyOracle::new(process);
    let seed = RngStream::new(5);
    let cal = process.generate(2000, &seed.child(phase::DATA).child(0), true)?;
    let test = process.generate(2000, &seed.child(phase::DATA).child(1), true)?;
    let x = test.x_row(0);

    let mcp = calibrate(MethodId::MCp, &MethodConfig::default(), &model, &cal, 0.2, &seed.child(phase::CALIBRATION))?;
    let region = mcp.region(&model, x, &seed.child(phase::TEST))?;
    println!("m_cp: q_hat {:.4}, base intervals at x={x:?}: {:?}", mcp.q_hat().unwrap(), region.state().intervals()?);

    let copula =
        calibrate(MethodId::CopulaCpts, &MethodConfig::default(), &model, &cal, 0.2, &seed.child(phase::CALIBRATION))?;
    let c = copula.copula().unwrap();
    println!(
        "copula_cpts: thresholds {:?}, levels {:?}, cal-2 coverage {:.4}",
        c.thresholds, c.levels, c.cal2_coverage
    );
    for (name, method) in [("m_cp", &mcp), ("copula_cpts", &copula)] {
        let covered = method.memberships(&model, &test, &seed.child(phase::TEST))?;
        println!("{name:<12} coverage {:.3}", marginal_coverage(&covered)?);
    }
    Ok(())
}
