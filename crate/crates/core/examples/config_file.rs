//! Run configuration: parse a flat `key = value` file, inspect diagnostics and
//! render it back.

use omnidp::config::RunConfig;

fn main() {
    let text = "# desk-scale pick\ntask = pick\nsensor = depthcam\npoint_budget = 4096\nhorizon = 8\nexecute = 4\n";
    let cfg = RunConfig::parse(text).expect("valid config");
    println!("{}", cfg.render());
    assert_eq!(RunConfig::parse(&cfg.render()).expect("rendered config parses"), cfg);

    for bad in ["point_budget = -1", "horizon = 4\nexecute = 6", "colour = blue", "batch = many"] {
        println!("{bad:?} -> {}", RunConfig::parse(bad).unwrap_err());
    }
}
