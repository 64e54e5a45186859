//! Bound-constrained IK: reach a pose produced by forward kinematics from a
//! random configuration, starting from the home posture.

use omnidp::ik::{reference_left_arm, solve_ik, IkProblem};
use omnidp::rng::seeded;
use rand::Rng;

fn main() -> omnidp::Result<()> {
    let chain = reference_left_arm();
    let (lo, hi) = (chain.lower(), chain.upper());
    let mut rng = seeded(5);
    let home = vec![1.35, 1.3, 0.0, -1.3, 0.0, 0.0, 0.0];
    for trial in 0..5 {
        let q_true: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l + 0.1..*h - 0.1)).collect();
        let target = chain.forward_kinematics(&q_true)?;
        let problem = IkProblem::new(&chain, target, home.clone(), home.clone());
        let res = solve_ik(&problem, &home)?;
        let reached = chain.forward_kinematics(&res.q_star)?;
        let (dp, da) = reached.distance(&target);
        println!(
            "trial {trial}: {} iterations, converged {}, position error {dp:.2e} m, orientation error {da:.2e} rad, inside bounds {}",
            res.iterations,
            res.converged,
            chain.within_limits(&res.q_star)
        );
    }
    Ok(())
}
