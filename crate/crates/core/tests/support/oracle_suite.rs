// Randomized comparisons of every cost operation against independently
// written formulas. Shared by the core integration tests and the CLI
// acceptance runner.

use ecoedgetwin::channel::{path_loss, transmission_rate, ChannelState};
use ecoedgetwin::cost::{
    caching_feasible, caching_normalize, discrepancy_factor, energy_breakdown, latency_breakdown,
    migration_cost, objective_value, offloaded_volume, qoe, reward, satisfaction, EnergyParams,
    LatencyOptions, Weights,
};
use ecoedgetwin::model::{EdgeServer, MobileUser, Point, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct OpResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

struct Tally {
    r: OpResult,
    tol: f64,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Self {
            r: OpResult {
                name,
                cases: 0,
                failures: 0,
                worst_rel: 0.0,
            },
            tol,
        }
    }

    fn check(&mut self, got: f64, want: f64) {
        let e = rel(got, want);
        self.r.worst_rel = self.r.worst_rel.max(e);
        if !(e <= self.tol) {
            self.r.failures += 1;
        }
    }

    fn case(&mut self) {
        self.r.cases += 1;
    }

    fn exact(&mut self, ok: bool) {
        if !ok {
            self.r.failures += 1;
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_user(rng: &mut ChaCha8Rng) -> MobileUser<f64> {
    let f = log_uniform(rng, 5e8, 3e9);
    MobileUser {
        id: 0,
        position: Point::new(0.0, 0.0),
        speed_kmh: 0.0,
        cpu_freq_hz: f,
        dt_freq_dev_hz: f * rng.random_range(0.0..0.9),
        tx_power_w: rng.random_range(0.05..0.5),
        budget: rng.random_range(1.0..20.0),
        qoe_weights: (0.5, 0.5),
        associated_server: None,
    }
}

fn random_servers(rng: &mut ChaCha8Rng, n: usize) -> Vec<EdgeServer<f64>> {
    (0..n)
        .map(|id| {
            let f = log_uniform(rng, 2e9, 2e10);
            EdgeServer {
                id,
                position: Point::new(0.0, 0.0),
                cpu_freq_hz: f,
                dt_freq_dev_hz: f * rng.random_range(0.0..0.9),
                coverage_radius_km: 1.0,
                noise_power_w: 1e-13,
            }
        })
        .collect()
}

/// A task split between local execution and one server in `0..n`.
fn random_task(rng: &mut ChaCha8Rng, n: usize) -> (Task<f64>, usize) {
    let d = log_uniform(rng, 1e5, 1e7);
    let c = log_uniform(rng, 1e7, 1e9);
    let s = rng.random_range(0..n);
    let beta = rng.random_range(0.0..=1.0);
    let mut t = Task::split(0, d, c, n, s, beta);
    t.migration_flag = rng.random_bool(0.5);
    (t, s)
}

/// Runs `cases` random inputs per operation with relative tolerance `tol`.
pub fn run_oracle_suite(cases: usize, seed: u64, tol: f64) -> Vec<OpResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut t = Tally::new("path_loss", tol);
    for _ in 0..cases {
        t.case();
        let d = log_uniform(&mut rng, 1.0, 5000.0);
        let d0 = rng.random_range(0.5..2.0);
        let eta = rng.random_range(2.0..4.0);
        let want = (eta * (d0 / d).ln()).exp();
        t.check(path_loss(d, d0, eta).unwrap(), want);
    }
    out.push(t.r);

    let mut t = Tally::new("transmission_rate", tol);
    for _ in 0..cases {
        t.case();
        let d = log_uniform(&mut rng, 1.0, 5000.0);
        let eta = rng.random_range(2.0..4.0);
        let gamma = d.powf(-eta);
        let s = -(1.0 - rng.random::<f64>()).ln();
        let p = rng.random_range(0.05..0.5);
        let sigma2 = log_uniform(&mut rng, 1e-15, 1e-11);
        let b = log_uniform(&mut rng, 1e5, 2e7);
        let ch = ChannelState::new(d, gamma, s).unwrap();
        let snr = p * gamma * s / (d * sigma2);
        let want = b * (1.0 + snr).log2();
        t.check(transmission_rate(p, &ch, sigma2, b, true).unwrap(), want);
        t.exact(transmission_rate(p, &ch, sigma2, b, false).unwrap() == 0.0);
    }
    out.push(t.r);

    let mut t = Tally::new("offloaded_volume", tol);
    for _ in 0..cases {
        t.case();
        let n = rng.random_range(1..6);
        let (task, s) = random_task(&mut rng, n);
        for i in 0..n {
            let want = if i == s { task.beta[s] * task.data_bits } else { 0.0 };
            t.check(offloaded_volume(&task, i, true).unwrap(), want);
        }
    }
    out.push(t.r);

    let mut t = Tally::new("migration_cost", tol);
    for _ in 0..cases {
        t.case();
        let n = rng.random_range(1..6);
        let (task, s) = random_task(&mut rng, n);
        let assoc: Vec<bool> = (0..n).map(|i| i == s).collect();
        let cf = log_uniform(&mut rng, 1e-9, 1e-5);
        let cdt = cf * rng.random_range(0.0..1.0);
        let h = if task.migration_flag { 1.0 } else { 0.0 };
        let bits = task.data_bits * task.beta[s];
        t.check(migration_cost(&task, &assoc, cf, cdt, false).unwrap(), h * bits * cf);
        t.check(migration_cost(&task, &assoc, cf, cdt, true).unwrap(), h * bits * (cf + cdt));
    }
    out.push(t.r);

    let mut t = Tally::new("caching_feasible", tol);
    for _ in 0..cases {
        t.case();
        let d = log_uniform(&mut rng, 1e5, 1e7);
        let m = log_uniform(&mut rng, 1e-4, 10.0);
        let dref = log_uniform(&mut rng, 1e5, 1e7);
        let cref = log_uniform(&mut rng, 1e-3, 10.0);
        let (dn, mn) = caching_normalize(d, m, dref, cref);
        t.check(dn, d / dref);
        t.check(mn, m / cref);
        t.exact(caching_feasible(dn, mn) == (d * cref <= m * dref));
        t.exact(caching_feasible(1.0, 1.0));
    }
    out.push(t.r);

    for (name, opts) in [
        ("latency_literal", LatencyOptions::LITERAL_WITH_GAPS),
        (
            "latency_decomposed",
            LatencyOptions {
                decomposed: true,
                dt_gaps: true,
            },
        ),
        (
            "latency_no_gaps",
            LatencyOptions {
                decomposed: false,
                dt_gaps: false,
            },
        ),
    ] {
        let mut t = Tally::new(name, tol);
        for _ in 0..cases {
            t.case();
            let n = rng.random_range(1..6);
            let (task, s) = random_task(&mut rng, n);
            let user = random_user(&mut rng);
            let servers = random_servers(&mut rng, n);
            let r = log_uniform(&mut rng, 1e5, 1e9);
            let q = rng.random_range(0.0..0.01);
            let got = latency_breakdown(&task, &user, Some((&servers[s], true)), r, q, opts).unwrap();

            let (fj, dj) = (user.cpu_freq_hz, user.dt_freq_dev_hz);
            let (fi, di) = (servers[s].cpu_freq_hz, servers[s].dt_freq_dev_hz);
            let cl = (1.0 - task.beta[s]) * task.cpu_cycles;
            let ce = task.beta[s] * task.cpu_cycles;
            let local = cl / fj;
            // the gap is the time difference between the twin's slower estimate and the real device
            let gap = |c: f64, f: f64, dev: f64| c / (f - dev) - c / f;
            let mut want = local;
            if opts.dt_gaps {
                want += gap(cl, fj, dj);
            }
            if ce > 0.0 {
                let edge = if opts.decomposed {
                    task.beta[s] * task.data_bits / r + ce / fi
                } else {
                    ce / fi / r
                };
                want += edge + q;
                if opts.dt_gaps {
                    want += if opts.decomposed {
                        gap(ce, fi, di)
                    } else {
                        gap(ce, fi, di) / r
                    };
                }
            }
            t.check(got.total_s, want);
            t.check(got.local_s, local);
        }
        out.push(t.r);
    }

    let mut t = Tally::new("energy", tol);
    for _ in 0..cases {
        t.case();
        let n = rng.random_range(1..6);
        let (task, s) = random_task(&mut rng, n);
        let user = random_user(&mut rng);
        let servers = random_servers(&mut rng, n);
        let assoc: Vec<bool> = (0..n).map(|i| i == s).collect();
        let rates: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 1e5, 1e9)).collect();
        let p = EnergyParams {
            energy_per_cycle: log_uniform(&mut rng, 1.0, 1e3),
            comm_energy_per_bit: log_uniform(&mut rng, 1e-10, 1e-8),
            download_power_w: rng.random_range(0.05..0.5),
            result_fraction: rng.random_range(0.0..0.5),
            dt_energy_per_prediction: log_uniform(&mut rng, 1e-5, 1e-2),
        };
        let k = rng.random_range(0..3usize);
        let got = energy_breakdown(&task, &user, &servers, &assoc, &rates, &p, k).unwrap();

        let b = task.beta[s];
        let local = p.energy_per_cycle * (1.0 - b) * task.cpu_cycles / (user.cpu_freq_hz + user.dt_freq_dev_hz);
        let bits = b * task.data_bits;
        let mut want = local + k as f64 * p.dt_energy_per_prediction;
        if bits > 0.0 {
            let srv = &servers[s];
            want += p.energy_per_cycle * b * task.cpu_cycles / (srv.cpu_freq_hz + srv.dt_freq_dev_hz);
            want += p.comm_energy_per_bit * bits;
            want += bits * (user.tx_power_w + p.download_power_w * p.result_fraction) / rates[s];
        }
        t.check(got.total_j, want);
        t.check(got.local_compute_j, local);
    }
    out.push(t.r);

    let mut t = Tally::new("discrepancy_factor", tol);
    for _ in 0..cases {
        t.case();
        let c = log_uniform(&mut rng, 1e7, 1e9);
        let f = log_uniform(&mut rng, 1e8, 1e10);
        let fh = f * rng.random_range(0.1..2.0);
        let want = c / (f + fh) * (1.0 / f) * (f - fh);
        t.check(discrepancy_factor(c, f, fh).unwrap(), want);
    }
    out.push(t.r);

    let mut t = Tally::new("satisfaction", tol);
    for _ in 0..cases {
        t.case();
        let lmin = rng.random_range(0.001..0.1);
        let lmax = lmin + rng.random_range(0.01..1.0);
        let base = rng.random_range(0.0..0.5);
        let l = rng.random_range(0.0..(lmax * 1.5));
        let want: f64 = if l <= lmin {
            1.0
        } else if l > lmax {
            base
        } else {
            1.0 - (l - lmin) / (lmax - lmin)
        };
        let got: f64 = satisfaction(l, lmin, lmax, base);
        // 1 - x and (b - l)/(b - a) differ by an ulp or so
        t.r.worst_rel = t.r.worst_rel.max((got - want).abs());
        if (got - want).abs() > 1e-12 {
            t.r.failures += 1;
        }
    }
    out.push(t.r);

    let mut t = Tally::new("qoe", tol);
    for _ in 0..cases {
        t.case();
        let w = rng.random_range(0.0..=1.0);
        let g = rng.random_range(0.1..20.0);
        let c = rng.random_range(0.0..g);
        let lw = rng.random_range(0.0..1.0);
        let ls = 1.0 - lw;
        let q = qoe(w, g, c, lw, ls).unwrap();
        t.check(q.value, lw * w + ls * (1.0 - c / g));
    }
    out.push(t.r);

    let mut t = Tally::new("objective", tol);
    for _ in 0..cases {
        t.case();
        let (w1, w2, w3) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
        let w = Weights::new(w1, w2, w3).unwrap();
        let (l, e, q) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..1.0));
        let want = [w1 * l, w2 * e, -w3 * q].iter().sum::<f64>();
        t.check(objective_value(l, e, q, &w), want);
        t.check(reward(l, e, q, &w), -want);
    }
    out.push(t.r);

    out
}
