//! L-CP and STDQR with a fitted conditional Gaussian.

use mocp::datagen::ToyProcess;
use mocp::metrics::marginal_coverage;
use mocp::models::fit_conditional_gaussian;
use mocp::rng::{phase, RngStream};
use mocp::scores::{calibrate, MethodConfig, MethodId};

fn main() -> mocp::error::Result<()> {
    let process = ToyProcess::Unimodal;
    let seed = RngStream::new(11);
    let data = seed.child(phase::DATA);
    let train = process.generate(3000, &data.child(0), true)?;
    let cal = process.generate(1000, &data.child(1), true)?;
    let test = process.generate(2000, &data.child(2), true)?;

    let model = fit_conditional_gaussian(&train)?;
    println!("mean at x = 0: {:?}", model.mean(&[0.0]));
    println!("residual covariance: {:?}", model.covariance());
    for id in [MethodId::LCp, MethodId::Stdqr] {
        let method = calibrate(id, &MethodConfig::default(), &model, &cal, 0.2, &seed.child(phase::CALIBRATION))?;
        let covered = method.memberships(&model, &test, &seed.child(phase::TEST))?;
        println!("{id:<6} q_hat {:.4} coverage {:.3}", method.q_hat().unwrap(), marginal_coverage(&covered)?);
    }
    Ok(())
}
