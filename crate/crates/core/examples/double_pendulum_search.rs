//! Grid search for a double-pendulum setting under which the greedy
//! controller swings both links up from hanging and keeps them upright for
//! the final 2 s of a 30 s rollout.
//!
//! Prints one line per setting and a summary of the best ones:
//! `cargo run --release --example double_pendulum_search > search.txt`

use std::f64::consts::PI;

use empower::{
    run_rollout_observed, wrap_angle, ChannelSpec, ControlPolicySpec, DoublePendulum, DoublePendulumParams, NoiseSpec,
    StateVector, Variant,
};

struct Score {
    tail_inside: bool,
    longest_hold: f64,
    /// Fraction of samples with both links within 0.5 rad of upright.
    near_fraction: f64,
    /// Smallest `|θ1| + |θ1 + θ2|` seen, wrapped.
    closest: f64,
}

fn score(model: &DoublePendulum, spec: &ControlPolicySpec, seed: u64) -> Option<Score> {
    let duration = 30.0;
    let noise = NoiseSpec::new(0.01, 1.0).unwrap();
    let mut s = Score {
        tail_inside: true,
        longest_hold: 0.0,
        near_fraction: 0.0,
        closest: f64::INFINITY,
    };
    let (mut start, mut samples, mut near) = (None::<f64>, 0usize, 0usize);
    let x0 = StateVector::from_column_slice(&[PI, 0.0, 0.0, 0.0]);
    let ro = run_rollout_observed(model, &x0, duration, spec, &noise, seed, &mut |t, x| {
        let (a1, a2) = (wrap_angle(x[0]), wrap_angle(x[0] + x[1]));
        let inside = a1.abs() < 0.2 && a2.abs() < 0.2 && x[2].abs() < 0.5 && (x[2] + x[3]).abs() < 0.5;
        samples += 1;
        if a1.abs() < 0.5 && a2.abs() < 0.5 {
            near += 1;
        }
        s.closest = s.closest.min(a1.abs() + a2.abs());
        if t >= duration - 2.0 - 1e-9 && !inside {
            s.tail_inside = false;
        }
        match (inside, start) {
            (true, None) => start = Some(t),
            (true, Some(t0)) => s.longest_hold = s.longest_hold.max(t - t0),
            (false, _) => start = None,
        }
    })
    .ok()?;
    if ro.failed {
        return None;
    }
    s.near_fraction = near as f64 / samples as f64;
    Some(s)
}

fn main() {
    let base = DoublePendulumParams::default();
    let plants = [
        ("default", base),
        (
            "light_outer",
            DoublePendulumParams {
                m2: 0.5,
                i2: 0.5 / 12.0,
                ..base
            },
        ),
        (
            "heavy_outer",
            DoublePendulumParams {
                m2: 2.0,
                i2: 2.0 / 12.0,
                ..base
            },
        ),
        (
            "short_outer",
            DoublePendulumParams {
                l2: 0.5,
                lc2: 0.25,
                i2: 0.25 / 12.0,
                ..base
            },
        ),
    ];
    let variants = [Variant::Classic, Variant::KickedCef, Variant::ControlledLyapunov];
    let mut results = Vec::new();
    for (plant_name, params) in plants {
        let model = DoublePendulum::new(params).unwrap();
        for variant in variants {
            for horizon_steps in [200usize, 500, 1000] {
                for bound in [1.0, 3.0, 10.0, 30.0] {
                    for decision_dt in [0.05, 0.1, 0.25, 0.5] {
                        for seed in 0..2u64 {
                            let mut spec =
                                ControlPolicySpec::for_variant(variant, 1e-3, horizon_steps, ChannelSpec::default())
                                    .unwrap();
                            spec.action_bound = bound;
                            spec.decision_dt = decision_dt;
                            let label = format!(
                                "plant={plant_name} variant={} horizon_steps={horizon_steps} bound={bound} decision_dt={decision_dt} seed={seed}",
                                variant.name()
                            );
                            match score(&model, &spec, seed) {
                                Some(s) => {
                                    println!(
                                        "{label} tail={} hold={:.2} near={:.3} closest={:.3}",
                                        s.tail_inside, s.longest_hold, s.near_fraction, s.closest
                                    );
                                    results.push((label, s));
                                }
                                None => println!("{label} diverged"),
                            }
                        }
                    }
                }
            }
        }
    }
    results.sort_by(|a, b| {
        (b.1.tail_inside, b.1.longest_hold)
            .partial_cmp(&(a.1.tail_inside, a.1.longest_hold))
            .unwrap()
            .then(b.1.near_fraction.total_cmp(&a.1.near_fraction))
    });
    let successes = results.iter().filter(|(_, s)| s.tail_inside).count();
    println!("---- {successes} of {} settings end upright; best ten:", results.len());
    for (label, s) in results.iter().take(10) {
        println!(
            "{label} tail={} hold={:.2} near={:.3} closest={:.3}",
            s.tail_inside, s.longest_hold, s.near_fraction, s.closest
        );
    }
}
