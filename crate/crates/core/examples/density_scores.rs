//! DR-CP and C-HDR on the unimodal toy with the oracle density.

use mocp::datagen::ToyProcess;
use mocp::metrics::marginal_coverage;
use mocp::models::ToyOracle;
use mocp::rng::{phase, RngStream};
use mocp::scores::{calibrate, MethodConfig, MethodId};

fn main() -> mocp::error::Result<()> {
    let process = ToyProcess::Unimodal;
    let model = ToyOracle::new(process);
    let seed = RngStream::new(7);
    let cal = process.generate(1000, &seed.child(phase::DATA).child(0), true)?;
    let test = process.generate(2000, &seed.child(phase::DATA).child(1), true)?;
    let config = MethodConfig::default();
    for id in [MethodId::DrCp, MethodId::CHdr] {
        let method = calibrate(id, &config, &model, &cal, 0.2, &seed.child(phase::CALIBRATION))?;
        let covered = method.memberships(&model, &test, &seed.child(phase::TEST))?;
        println!("{id:<6} q_hat {:>10.4}  coverage {:.3}", method.q_hat().unwrap(), marginal_coverage(&covered)?);
    }
    Ok(())
}
