//! Sample-based regions: PCP, HD-PCP, C-PCP and CP2-PCP from a sampler only.

use mocp::datagen::ToyProcess;
use mocp::metrics::marginal_coverage;
use mocp::models::{Capabilities, CapabilityMask, ToyOracle};
use mocp::rng::{phase, RngStream};
use mocp::scores::{calibrate, MethodConfig, MethodId, MonteCarloParams};

fn main() -> mocp::error::Result<()> {
    let process = ToyProcess::Bimodal;
    let oracle = ToyOracle::new(process);
    let seed = RngStream::new(3);
    let cal = process.generate(500, &seed.child(phase::DATA).child(0), true)?;
    let test = process.generate(1000, &seed.child(phase::DATA).child(1), true)?;
    let config = MethodConfig { monte_carlo: MonteCarloParams::new(50, 50)?, ..MethodConfig::default() };

    // HD-PCP also needs the density; the others run on a sampler alone.
    let sampler_only = CapabilityMask::new(ToyOracle::new(process), Capabilities::sampler());
    for id in [MethodId::Pcp, MethodId::HdPcp, MethodId::CPcp, MethodId::Cp2Pcp] {
        let missing = id.missing(&Capabilities::sampler());
        if !missing.is_empty() {
            println!("{id:<8} needs {}; using the full oracle", missing.join(", "));
        }
        let model: &dyn mocp::models::ConditionalModel = if missing.is_empty() { &sampler_only } else { &oracle };
        let method = calibrate(id, &config, model, &cal, 0.2, &seed.child(phase::CALIBRATION))?;
        let covered = method.memberships(model, &test, &seed.child(phase::TEST))?;
        println!("{id:<8} q_hat {:.4} coverage {:.3}", method.q_hat().unwrap(), marginal_coverage(&covered)?);
    }
    Ok(())
}
