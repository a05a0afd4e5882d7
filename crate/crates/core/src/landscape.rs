//! Empowerment over two-dimensional slices of state space, and the study
//! of how a value converges as the time step is refined.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{variant_empowerment, ChannelSpec, Variant};
use crate::controller::substeps;
use crate::error::{Error, Result};
use crate::model::{StateVector, SystemModel};
use crate::sensitivity::HorizonSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// State components varied along the first and second axis.
    pub axes: [usize; 2],
    /// `(min, max)` per axis, in the units of the state component.
    pub ranges: [(f64, f64); 2],
    /// Points per axis, endpoints included.
    pub resolution: [usize; 2],
    /// Values for the remaining state components, in index order.
    pub fixed_values: Vec<f64>,
}

impl GridSpec {
    /// A grid over components 0 and 1 of a two-dimensional state.
    pub fn plane(ranges: [(f64, f64); 2], resolution: [usize; 2]) -> Self {
        GridSpec {
            axes: [0, 1],
            ranges,
            resolution,
            fixed_values: Vec::new(),
        }
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        let [a, b] = self.axes;
        if a >= state_dim || b >= state_dim || a == b {
            return Err(Error::invalid(
                "axes",
                format!("need two distinct indices below {state_dim}, got {a} and {b}"),
            ));
        }
        for (lo, hi) in self.ranges {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(
                    "ranges",
                    format!("need finite min < max, got ({lo}, {hi})"),
                ));
            }
        }
        if self.resolution.iter().any(|&r| r < 2) {
            return Err(Error::invalid("resolution", "need at least 2 points per axis"));
        }
        if self.fixed_values.len() != state_dim - 2 {
            return Err(Error::DimensionMismatch {
                what: "fixed_values",
                expected: state_dim - 2,
                got: self.fixed_values.len(),
            });
        }
        if self.fixed_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("fixed_values", "must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution[0] * self.resolution[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of point `i` along axis `axis`.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = self.ranges[axis];
        let n = self.resolution[axis] - 1;
        match i {
            0 => lo,
            _ if i == n => hi,
            _ => lo + (hi - lo) * i as f64 / n as f64,
        }
    }

    /// Full state at grid point `(i, j)`.
    pub fn state(&self, i: usize, j: usize) -> StateVector {
        let dim = self.fixed_values.len() + 2;
        let mut fixed = self.fixed_values.iter();
        DVector::from_fn(dim, |k, _| {
            if k == self.axes[0] {
                self.coordinate(0, i)
            } else if k == self.axes[1] {
                self.coordinate(1, j)
            } else {
                *fixed.next().expect("validated length")
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub grid: GridSpec,
    pub variant: Variant,
    pub horizon: HorizonSpec,
    pub channel: ChannelSpec,
    /// Row-major over (first axis, second axis); `None` where the rollout
    /// or the decomposition failed.
    pub values: Vec<Option<f64>>,
}

impl LandscapeGrid {
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.grid.resolution[1] + j]
    }

    pub fn failed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Grid indices and value of the largest finite entry; the first one
    /// in row-major order on ties.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let cols = self.grid.resolution[1];
        let mut best: Option<(usize, f64)> = None;
        for (k, v) in self.values.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
        }
        best.map(|(k, v)| (k / cols, k % cols, v))
    }
}

/// Evaluates `variant` at every grid point. `workers` bounds the number of
/// threads (0 uses the global pool); the result does not depend on it.
pub fn evaluate_landscape(
    model: &dyn SystemModel,
    grid: &GridSpec,
    variant: Variant,
    horizon: &HorizonSpec,
    channel: &ChannelSpec,
    workers: usize,
) -> Result<LandscapeGrid> {
    grid.validate(model.state_dim())?;
    horizon.validate()?;
    channel.validate()?;
    if !variant.matches(horizon) {
        return Err(Error::invalid(
            "variant",
            format!("horizon indices do not match the `{}` variant", variant.name()),
        ));
    }
    let cols = grid.resolution[1];
    let eval = || -> Vec<Option<f64>> {
        (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let x = grid.state(k / cols, k % cols);
                match variant_empowerment(model, &x, variant, horizon, channel) {
                    Ok(r) => Some(r.value_nats),
                    Err(e) => {
                        log::debug!("grid point {k} failed: {e}");
                        None
                    }
                }
            })
            .collect()
    };
    let values = if workers == 0 {
        eval()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid("workers", e.to_string()))?
            .install(eval)
    };
    Ok(LandscapeGrid {
        grid: grid.clone(),
        variant,
        horizon: *horizon,
        channel: *channel,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub value_nats: f64,
    /// `value − previous value`; `None` on the first row.
    pub delta_prev: Option<f64>,
}

/// Empowerment at a fixed physical horizon `t_e_seconds` for each step in
/// `dt_list` (coarse to fine).
pub fn convergence_study(
    model: &dyn SystemModel,
    x0: &StateVector,
    variant: Variant,
    t_e_seconds: f64,
    dt_list: &[f64],
    channel: &ChannelSpec,
) -> Result<Vec<ConvergenceRow>> {
    if dt_list.is_empty() {
        return Err(Error::invalid("dt_list", "must not be empty"));
    }
    if dt_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("dt_list", "must be non-increasing"));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let steps = substeps(t_e_seconds, dt)
            .map_err(|_| Error::invalid("dt_list", format!("{dt} does not divide t_e = {t_e_seconds}")))?;
        let horizon = variant.horizon(dt, steps)?;
        let value = variant_empowerment(model, x0, variant, &horizon, channel)?.value_nats;
        rows.push(ConvergenceRow {
            dt,
            value_nats: value,
            delta_prev: rows.last().map(|r| value - r.value_nats),
        });
    }
    Ok(rows)
}

/// Richardson extrapolation of a first-order sequence from its two finest
/// rows.
pub fn richardson_limit(rows: &[ConvergenceRow]) -> Option<f64> {
    let [.., a, b] = rows else { return None };
    let ratio = a.dt / b.dt;
    Some(b.value_nats + (b.value_nats - a.value_nats) / (ratio - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{LinearTest, Pendulum, PendulumParams};
    use std::f64::consts::PI;

    fn pendulum_grid(n: usize) -> GridSpec {
        GridSpec::plane([(-PI, PI), (-2.0 * PI, 2.0 * PI)], [n, n])
    }

    /// ½ ln(1 + ρ·P) with ρ² the continuous-time response energy
    /// `∫₀ᵗ e^{2α s} ds` of the scalar linear system.
    fn linear_limit(alpha: f64, t_e: f64, power: f64) -> f64 {
        let energy = if alpha == 0.0 {
            t_e
        } else {
            ((2.0 * alpha * t_e).exp() - 1.0) / (2.0 * alpha)
        };
        0.5 * (1.0 + energy.sqrt() * power).ln()
    }

    #[test]
    fn grid_coordinates_hit_endpoints() {
        let g = pendulum_grid(5);
        assert_eq!(g.coordinate(0, 0), -PI);
        assert_eq!(g.coordinate(0, 4), PI);
        assert_eq!(g.coordinate(0, 2), 0.0);
        assert_eq!(g.state(4, 0).as_slice(), &[PI, -2.0 * PI]);

        let g = GridSpec {
            axes: [2, 0],
            ranges: [(0.0, 1.0), (-1.0, 1.0)],
            resolution: [2, 3],
            fixed_values: vec![7.0, 8.0],
        };
        g.validate(4).unwrap();
        assert_eq!(g.state(1, 2).as_slice(), &[1.0, 7.0, 1.0, 8.0]);
    }

    #[test]
    fn grid_validation() {
        let mut g = pendulum_grid(5);
        assert!(g.validate(2).is_ok());
        g.resolution = [1, 5];
        assert!(g.validate(2).is_err());
        let mut g = pendulum_grid(5);
        g.axes = [0, 0];
        assert!(g.validate(2).is_err());
        let mut g = pendulum_grid(5);
        g.ranges[1] = (1.0, 1.0);
        assert!(g.validate(2).is_err());
        assert!(pendulum_grid(5).validate(4).is_err());
    }

    #[test]
    fn zero_gain_landscape_is_zero() {
        let lin = LinearTest::with_gain(0.3, 0.0);
        let grid = GridSpec {
            axes: [0, 0],
            ..pendulum_grid(3)
        };
        // A scalar model cannot carry a 2-D grid.
        assert!(evaluate_landscape(
            &lin,
            &grid,
            Variant::Classic,
            &Variant::Classic.horizon(0.01, 10).unwrap(),
            &ChannelSpec::default(),
            1
        )
        .is_err());

        let p = ZeroGainPendulum(Pendulum::new(PendulumParams::default()).unwrap());
        let h = Variant::KickedCef.horizon(1e-2, 20).unwrap();
        let l = evaluate_landscape(
            &p,
            &pendulum_grid(7),
            Variant::KickedCef,
            &h,
            &ChannelSpec::default(),
            1,
        )
        .unwrap();
        assert!(l.values.iter().all(|v| *v == Some(0.0)));
    }

    struct ZeroGainPendulum(Pendulum);

    impl SystemModel for ZeroGainPendulum {
        fn state_dim(&self) -> usize {
            2
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn drift(&self, x: &StateVector) -> StateVector {
            self.0.drift(x)
        }
        fn gain(&self, _x: &StateVector) -> nalgebra::DMatrix<f64> {
            nalgebra::DMatrix::zeros(2, 1)
        }
        fn drift_jacobian(&self, x: &StateVector) -> nalgebra::DMatrix<f64> {
            self.0.drift_jacobian(x)
        }
        fn state_names(&self) -> Vec<String> {
            self.0.state_names()
        }
    }

    #[test]
    fn worker_count_does_not_change_values() {
        let p = Pendulum::new(PendulumParams::default()).unwrap();
        let h = Variant::Classic.horizon(1e-2, 50).unwrap();
        let ch = ChannelSpec::default();
        let one = evaluate_landscape(&p, &pendulum_grid(9), Variant::Classic, &h, &ch, 1).unwrap();
        let three = evaluate_landscape(&p, &pendulum_grid(9), Variant::Classic, &h, &ch, 3).unwrap();
        assert_eq!(one, three);
        // Sequential oracle, reverse order.
        for k in (0..81).rev() {
            let x = one.grid.state(k / 9, k % 9);
            let v = variant_empowerment(&p, &x, Variant::Classic, &h, &ch)
                .unwrap()
                .value_nats;
            assert_eq!(one.values[k], Some(v));
        }
    }

    #[test]
    fn pendulum_landscape_is_symmetric_and_peaks_upright() {
        let p = Pendulum::new(PendulumParams::default()).unwrap();
        let h = Variant::Classic.horizon(1e-3, 500).unwrap();
        let l = evaluate_landscape(&p, &pendulum_grid(21), Variant::Classic, &h, &ChannelSpec::default(), 0).unwrap();
        assert_eq!(l.failed_count(), 0);
        for i in 0..21 {
            for j in 0..21 {
                let a = l.value(i, j).unwrap();
                let b = l.value(20 - i, 20 - j).unwrap();
                assert!((a - b).abs() < 1e-8, "({i},{j}) {a} vs {b}");
            }
        }
        let (i, _, _) = l.argmax().unwrap();
        assert!(l.grid.coordinate(0, i).abs() < 0.2);
    }

    #[test]
    fn stiff_points_are_flagged_not_fatal() {
        let lin = LinearTest::new(1e3);
        let grid = GridSpec::plane([(-1.0, 1.0), (-1.0, 1.0)], [3, 3]);
        let two = TwoCopies(lin);
        let h = Variant::Classic.horizon(1.0, 400).unwrap();
        let l = evaluate_landscape(&two, &grid, Variant::Classic, &h, &ChannelSpec::default(), 1).unwrap();
        assert_eq!(l.failed_count(), 9);
        assert!(l.argmax().is_none());
    }

    /// Two uncoupled copies of a scalar model.
    struct TwoCopies(LinearTest);

    impl SystemModel for TwoCopies {
        fn state_dim(&self) -> usize {
            2
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn drift(&self, x: &StateVector) -> StateVector {
            x * self.0.alpha
        }
        fn gain(&self, _x: &StateVector) -> nalgebra::DMatrix<f64> {
            nalgebra::DMatrix::from_column_slice(2, 1, &[1.0, 0.0])
        }
        fn drift_jacobian(&self, _x: &StateVector) -> nalgebra::DMatrix<f64> {
            nalgebra::DMatrix::identity(2, 2) * self.0.alpha
        }
        fn state_names(&self) -> Vec<String> {
            vec!["x".into(), "y".into()]
        }
    }

    #[test]
    fn linear_convergence_to_riemann_limit() {
        let ch = ChannelSpec::default();
        for alpha in [-1.0, 0.0, 0.8] {
            let lin = LinearTest::new(alpha);
            let dts = [0.01, 0.0025, 0.000625];
            let rows =
                convergence_study(&lin, &DVector::from_element(1, 0.0), Variant::Classic, 0.5, &dts, &ch).unwrap();
            let exact = linear_limit(alpha, 0.5, ch.power);
            let errors: Vec<f64> = rows.iter().map(|r| (r.value_nats - exact).abs()).collect();
            for (r, e) in rows.iter().zip(&errors) {
                assert!(
                    *e <= 2.0 * alpha.abs() * r.dt + 1e-12,
                    "alpha {alpha} dt {} err {e}",
                    r.dt
                );
            }
            if alpha != 0.0 {
                assert!(errors[2] < errors[1] && errors[1] < errors[0]);
            }
            let extrapolated = richardson_limit(&rows).unwrap();
            assert!(
                (extrapolated - exact).abs() <= 1e-4 * exact,
                "alpha {alpha}: {extrapolated} vs {exact}"
            );
            assert_eq!(rows[0].delta_prev, None);
        }
    }

    #[test]
    fn repeated_dt_gives_identical_values() {
        let p = Pendulum::new(PendulumParams::default()).unwrap();
        let x = DVector::from_column_slice(&[0.3, -0.2]);
        let rows = convergence_study(&p, &x, Variant::KickedCef, 0.1, &[1e-3, 1e-3], &ChannelSpec::default()).unwrap();
        assert_eq!(rows[0].value_nats, rows[1].value_nats);
        assert_eq!(rows[1].delta_prev, Some(0.0));
    }

    #[test]
    fn convergence_rejects_bad_steps() {
        let p = Pendulum::new(PendulumParams::default()).unwrap();
        let x = DVector::from_column_slice(&[0.0, 0.0]);
        let ch = ChannelSpec::default();
        assert!(convergence_study(&p, &x, Variant::Classic, 0.5, &[], &ch).is_err());
        assert!(convergence_study(&p, &x, Variant::Classic, 0.5, &[1e-3, 4e-3], &ch).is_err());
        assert!(convergence_study(&p, &x, Variant::Classic, 0.5, &[3e-3], &ch).is_err());
    }
}
