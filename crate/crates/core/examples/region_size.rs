//! Importance-sampling volume: a ball with known volume, then real regions.

use mocp::datagen::{ball_scenario, ToyProcess};
use mocp::metrics::{estimate_region_size, region_sizes};
use mocp::models::{ConditionalGaussian, ToyOracle};
use mocp::rng::{phase, RngStream};
use mocp::scores::{calibrate, MethodConfig, MethodId};

fn main() -> mocp::error::Result<()> {
    for d in [1, 2, 4, 8] {
        let ball = ball_scenario(d, 0.2)?;
        let model = ConditionalGaussian::standard(1, d);
        let v = estimate_region_size(&model, &[0.0], 10_000, &RngStream::new(d as u64), |ys| {
            Ok(ys.rows().into_iter().map(|y| ball.contains(&y.to_vec())).collect())
        })?;
        println!("d={d}: log volume {:.4} estimated {:.4}", ball.log_volume, v.ln());
    }

    let process = ToyProcess::Unimodal;
    let model = ToyOracle::new(process);
    let seed = RngStream::new(2);
    let cal = process.generate(500, &seed.child(phase::DATA).child(0), true)?;
    let test = process.generate(300, &seed.child(phase::DATA).child(1), true)?;
    for id in [MethodId::DrCp, MethodId::Pcp, MethodId::LCp, MethodId::MCp] {
        let method = calibrate(id, &MethodConfig::default(), &model, &cal, 0.2, &seed.child(phase::CALIBRATION))?;
        let sizes = region_sizes(&method, &model, &test, 1000, &seed.child(phase::TEST), &seed.child(phase::VOLUME))?;
        println!("{id:<5} mean size {:.3} median {:.3}", sizes.mean_size, sizes.median_size);
    }
    Ok(())
}
