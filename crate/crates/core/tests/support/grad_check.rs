// Central finite differences against the analytic backward pass.

use ecoedgetwin::nn::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub dims: Vec<usize>,
    pub params: usize,
    /// ‖g − g_fd‖ / max(‖g‖, ‖g_fd‖)
    pub rel_err: f64,
}

fn loss(net: &Network<f64>, x: &[f64], u: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(u).map(|(y, w)| y * w).sum()
}

/// Checks one network on the scalar loss `u · net(x)`.
pub fn check_network(dims: &[usize], seed: u64, eps: f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::new(dims, &mut rng).unwrap();
    let x: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..dims[dims.len() - 1]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let trace = net.trace(&x).unwrap();
    let analytic: Vec<f64> = net.backward_trace(&trace, &u).unwrap().iter().collect();

    let n = analytic.len();
    let (mut diff2, mut a2, mut f2) = (0.0, 0.0, 0.0);
    for (k, &g) in analytic.iter().enumerate() {
        let orig = net.params().nth(k).unwrap();
        *net.params_mut().nth(k).unwrap() = orig + eps;
        let up = loss(&net, &x, &u);
        *net.params_mut().nth(k).unwrap() = orig - eps;
        let down = loss(&net, &x, &u);
        *net.params_mut().nth(k).unwrap() = orig;
        let fd = (up - down) / (2.0 * eps);
        diff2 += (g - fd).powi(2);
        a2 += g * g;
        f2 += fd * fd;
    }
    let scale = a2.sqrt().max(f2.sqrt());
    GradCheck {
        dims: dims.to_vec(),
        params: n,
        rel_err: if scale > 0.0 { diff2.sqrt() / scale } else { 0.0 },
    }
}

/// Twenty shapes from tiny up to 16-32-32-32-8.
pub fn standard_shapes() -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut shapes = vec![vec![1, 1], vec![3, 2], vec![16, 32, 32, 32, 8]];
    while shapes.len() < 20 {
        let depth = rng.random_range(1..=4);
        let mut d = vec![rng.random_range(1..=16)];
        for _ in 0..depth - 1 {
            d.push(rng.random_range(1..=32));
        }
        d.push(rng.random_range(1..=8));
        shapes.push(d);
    }
    shapes
}
