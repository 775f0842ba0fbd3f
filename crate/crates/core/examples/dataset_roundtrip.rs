//! Generates a tb dataset, writes it to disk, reloads it and inspects one instance.

use dfmdp::harness::{generate_dataset, sha256_file, GenerateConfig};
use dfmdp::mdp::{load_dataset, save_dataset, Domain, EnvSpec, Regime, Split};

fn main() -> Result<(), dfmdp::Error> {
    let cfg = GenerateConfig { trajectories: 20, ..GenerateConfig::new(EnvSpec::default_for(Domain::Tb), Regime::NearOptimal, 5) };
    let ds = generate_dataset(&cfg)?;
    let path = std::env::temp_dir().join("dfmdp-tb-example.json");
    save_dataset(&ds, &path)?;
    let back = load_dataset(&path)?;
    println!("{} instances, sha256 {}", back.len(), sha256_file(&path)?);
    for split in [Split::Train, Split::Val] {
        println!("{split:?}: instances {:?}", back.indices(split));
    }
    let inst = back.instance(0);
    println!("features {:?}, {} true parameters", inst.features.shape(), inst.true_params.len());
    let t = &back.trajectories(0)[0];
    let step = &t.steps[0];
    println!("first step: action {}, behavior prob {:.3}, reward {}", step.action, step.behavior_prob, step.reward);
    assert_eq!(back.trajectories(0), ds.trajectories(0));
    std::fs::remove_file(&path)?;
    Ok(())
}
