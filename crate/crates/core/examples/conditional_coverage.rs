//! WSC, CEC-X and CEC-V for a density score and its CDF-calibrated version.

use mocp::datagen::ToyProcess;
use mocp::metrics::{cec_v, cec_x, density_features, kmeans_pp, wsc, CecConfig, WscConfig};
use mocp::models::ToyOracle;
use mocp::rng::{phase, RngStream};
use mocp::scores::{calibrate, MethodConfig, MethodId};

fn main() -> mocp::error::Result<()> {
    let process = ToyProcess::Unimodal;
    let model = ToyOracle::new(process);
    let seed = RngStream::new(21);
    let data = seed.child(phase::DATA);
    let cal = process.generate(1000, &data.child(0), true)?;
    let val = process.generate(1000, &data.child(1), true)?;
    let test = process.generate(3000, &data.child(2), true)?;

    let cec = CecConfig::default();
    let partition = kmeans_pp(val.x.view(), cec.clusters, &mut seed.child(phase::CLUSTERING).rng(), cec.max_iter)?;
    let features = seed.child(phase::DENSITY_FEATURES);
    let val_f = density_features(&model, val.x.view(), cec.density_samples, &features.child(0))?;
    let test_f = density_features(&model, test.x.view(), cec.density_samples, &features.child(1))?;
    let wsc_config = WscConfig { n_directions: 200, ..WscConfig::default() };

    for id in [MethodId::DrCp, MethodId::CHdr, MethodId::LCp] {
        let method = calibrate(id, &MethodConfig::default(), &model, &cal, 0.2, &seed.child(phase::CALIBRATION))?;
        let covered = method.memberships(&model, &test, &seed.child(phase::TEST))?;
        let w = wsc(test.x.view(), &covered, &wsc_config, &seed.child(phase::WSC))?;
        let cx = cec_x(test.x.view(), &covered, &partition, 0.2)?;
        let cv = cec_v(val_f.view(), test_f.view(), &covered, &cec, 0.2, &seed.child(phase::CLUSTERING).child(1))?;
        println!("{id:<6} wsc {:.3}  cec_x {cx:.2e}  cec_v {cv:.2e}", w.value);
    }
    Ok(())
}
