use rand::Rng;
use rand_distr::Exp1;

use super::JumpKernel;

/// Endpoint of one walk started at `x` and run for time `t`.
pub fn simulate_walk<R: Rng + ?Sized>(kernel: &JumpKernel, x: usize, t: f64, rng: &mut R) -> usize {
    simulate_walk_counted(kernel, x, t, rng).0
}

/// Endpoint and number of jumps.
pub fn simulate_walk_counted<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    x: usize,
    t: f64,
    rng: &mut R,
) -> (usize, usize) {
    let mut pos = x;
    let mut clock: f64 = rng.sample(Exp1);
    let mut jumps = 0;
    while clock <= t {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = pos;
        for (y, p) in kernel.row(pos) {
            acc += p;
            next = y;
            if u < acc {
                break;
            }
        }
        pos = next;
        jumps += 1;
        clock += rng.sample::<f64, _>(Exp1);
    }
    (pos, jumps)
}
