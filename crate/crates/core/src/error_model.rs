//! Planning model for how estimated errors respond to refinement.
//!
//! One spatial (temporal) refinement halves the step size, so the
//! discretisation error shrinks by `2^s_x` (`2^s_t`). A refined prediction is
//! inflated by the safety factor `f_r` and scaled by a model-dependent
//! amplification factor, which is zero on the algebraic model because it has
//! no discretisation error.
//!
//! Model errors follow the reduction fractions `F_m(3,2)` and `F_m(2,1)`: a
//! switch from level `a` to `a - 1` removes `F_m(a, a-1)` of the error the
//! pipe had at M3. With the default fractions summing to one, a pipe refined
//! all the way to M1 has no model error left.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::level::ModelLevel;

/// Estimated model, spatial and temporal error of one pipe, in units of the
/// target functional.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTriple {
    pub model: f64,
    pub space: f64,
    pub time: f64,
}

impl ErrorTriple {
    pub fn new(model: f64, space: f64, time: f64) -> Self {
        ErrorTriple { model, space, time }
    }

    pub fn sum(&self) -> f64 {
        self.model + self.space + self.time
    }

    pub fn is_valid(&self) -> bool {
        [self.model, self.space, self.time]
            .iter()
            .all(|e| e.is_finite() && *e >= 0.0)
    }

    /// Zeroes the components that cannot exist on `level`: no model error on
    /// M1, no discretisation error on M3.
    pub fn realized(mut self, level: ModelLevel) -> Self {
        match level {
            ModelLevel::Euler => self.model = 0.0,
            ModelLevel::Algebraic => {
                self.space = 0.0;
                self.time = 0.0;
            }
            ModelLevel::Semilinear => {}
        }
        self
    }
}

/// Pending refinement counts `(r_m, r_x, r_t)` for one pipe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Refinement {
    pub model: u32,
    pub space: u32,
    pub time: u32,
}

impl Refinement {
    pub const ZERO: Refinement = Refinement {
        model: 0,
        space: 0,
        time: 0,
    };

    pub fn new(model: u32, space: u32, time: u32) -> Self {
        Refinement { model, space, time }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    pub fn bumped(mut self, kind: RefinementKind) -> Self {
        match kind {
            RefinementKind::Model => self.model += 1,
            RefinementKind::Space => self.space += 1,
            RefinementKind::Time => self.time += 1,
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinementKind {
    Model,
    Space,
    Time,
}

/// Parameters shared by all refinement strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    /// Relative tolerance on the network error.
    pub tol: f64,
    /// Share of the tolerance reserved for model errors (individual bounds).
    pub kappa: f64,
    /// Fraction of the best option a pipe must reach to be refined.
    pub phi: f64,
    /// Safety factor `f_r > 1` applied to refined discretisation errors.
    pub safety_factor: f64,
    pub space_order: f64,
    pub time_order: f64,
    /// `F_x(m)` for m = 1, 2, 3.
    pub space_amplification: [f64; 3],
    /// `F_t(m)` for m = 1, 2, 3.
    pub time_amplification: [f64; 3],
    /// `F_m(3, 2)`.
    pub model_reduction_32: f64,
    /// `F_m(2, 1)`.
    pub model_reduction_21: f64,
    /// Magnitude of the target functional `|M(u^h)|`.
    pub target_value: f64,
    pub max_iterations: usize,
    /// All pipes share one time mesh; a temporal refinement anywhere refines
    /// every pipe.
    pub uniform_time: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            tol: 0.1,
            kappa: 1.0 / 3.0,
            phi: 1.0,
            safety_factor: 1.1,
            space_order: 2.0,
            time_order: 1.0,
            space_amplification: [1.0, 1.0, 0.0],
            time_amplification: [1.0, 1.0, 0.0],
            model_reduction_32: 0.75,
            model_reduction_21: 0.25,
            target_value: 30.0,
            max_iterations: 100,
            uniform_time: false,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(msg.to_string()))
            }
        };
        check(self.tol > 0.0 && !self.tol.is_nan(), "tol must be positive")?;
        check(
            self.kappa > 0.0 && self.kappa < 1.0,
            "kappa must lie in (0, 1)",
        )?;
        check(self.phi > 0.0 && self.phi <= 1.0, "phi must lie in (0, 1]")?;
        check(
            self.safety_factor > 1.0 && self.safety_factor.is_finite(),
            "safety_factor must exceed 1",
        )?;
        check(
            self.space_order > 0.0 && self.time_order > 0.0,
            "convergence orders must be positive",
        )?;
        check(
            self.space_amplification[1] == 1.0 && self.time_amplification[1] == 1.0,
            "amplification factors of M2 must be 1",
        )?;
        check(
            self.space_amplification[2] == 0.0 && self.time_amplification[2] == 0.0,
            "amplification factors of M3 must be 0",
        )?;
        check(
            self.space_amplification[0] >= 0.0 && self.time_amplification[0] >= 0.0,
            "amplification factors of M1 must be non-negative",
        )?;
        for f in [self.model_reduction_32, self.model_reduction_21] {
            check(
                f > 0.0 && f <= 1.0,
                "model reduction fractions must lie in (0, 1]",
            )?;
        }
        check(
            self.target_value > 0.0 && self.target_value.is_finite(),
            "target_value must be positive",
        )?;
        check(self.max_iterations > 0, "max_iterations must be positive")?;
        Ok(())
    }

    /// Absolute error budget `tol * |M|`.
    pub fn budget(&self) -> f64 {
        self.tol * self.target_value
    }

    fn space_amplification(&self, m: ModelLevel) -> f64 {
        self.space_amplification[m.slot()]
    }

    fn time_amplification(&self, m: ModelLevel) -> f64 {
        self.time_amplification[m.slot()]
    }

    /// `F_m(from, from - 1)`; zero when `from` is M1.
    pub fn model_reduction(&self, from: ModelLevel) -> f64 {
        match from {
            ModelLevel::Algebraic => self.model_reduction_32,
            ModelLevel::Semilinear => self.model_reduction_21,
            ModelLevel::Euler => 0.0,
        }
    }

    /// Share of the M3 model error still present on level `m`.
    fn remaining_fraction(&self, m: ModelLevel) -> f64 {
        match m {
            ModelLevel::Algebraic => 1.0,
            ModelLevel::Semilinear => 1.0 - self.model_reduction_32,
            ModelLevel::Euler => (1.0 - self.model_reduction_32 - self.model_reduction_21).max(0.0),
        }
    }
}

/// `1 + (f_r - 1) sign(r)`.
pub fn safety(r: u32, f_r: f64) -> f64 {
    if r == 0 {
        1.0
    } else {
        f_r
    }
}

fn discretisation_error(e: f64, order: f64, r: u32, f_r: f64, amplification: f64) -> f64 {
    e / 2f64.powf(order * r as f64) * safety(r, f_r) * amplification
}

/// Spatial error on model `level` after `r_x` halvings of the spatial step.
pub fn predicted_space_error(level: ModelLevel, e_x: f64, r_x: u32, cfg: &StrategyConfig) -> f64 {
    discretisation_error(
        e_x,
        cfg.space_order,
        r_x,
        cfg.safety_factor,
        cfg.space_amplification(level),
    )
}

/// Temporal error on model `level` after `r_t` halvings of the time step.
pub fn predicted_time_error(level: ModelLevel, e_t: f64, r_t: u32, cfg: &StrategyConfig) -> f64 {
    discretisation_error(
        e_t,
        cfg.time_order,
        r_t,
        cfg.safety_factor,
        cfg.time_amplification(level),
    )
}

/// Model error left after `r_m` model refinements of a pipe that started on
/// `start` with estimated model error `e_m`.
///
/// Panics if `r_m` exceeds the refinement headroom of `start`.
pub fn predicted_model_error(start: ModelLevel, e_m: f64, r_m: u32, cfg: &StrategyConfig) -> f64 {
    let current = start
        .refined(r_m)
        .unwrap_or_else(|| panic!("{r_m} model refinements exceed the hierarchy from {start}"));
    if current == start {
        return e_m;
    }
    let base = cfg.remaining_fraction(start);
    if base > 0.0 {
        e_m * cfg.remaining_fraction(current) / base
    } else {
        let removed: f64 = (0..r_m)
            .map(|k| cfg.model_reduction(start.refined(k).expect("within headroom")))
            .sum();
        (e_m * (1.0 - removed)).max(0.0)
    }
}

/// Predicted error `e_m + e_x + e_t` of one pipe under a refinement.
pub fn pipe_error_sum(
    errs: &ErrorTriple,
    level: ModelLevel,
    r: Refinement,
    cfg: &StrategyConfig,
) -> f64 {
    let current = level.refined(r.model).expect("model refinement beyond M1");
    predicted_model_error(level, errs.model, r.model, cfg)
        + predicted_space_error(current, errs.space, r.space, cfg)
        + predicted_time_error(current, errs.time, r.time, cfg)
}

/// Net error reductions of one further refinement of each kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReductions {
    /// `None` when the pipe already runs M1.
    pub model: Option<f64>,
    pub space: f64,
    pub time: f64,
}

impl ErrorReductions {
    pub fn get(&self, kind: RefinementKind) -> Option<f64> {
        match kind {
            RefinementKind::Model => self.model,
            RefinementKind::Space => Some(self.space),
            RefinementKind::Time => Some(self.time),
        }
    }
}

/// Per-kind error reductions (the body of the pipe-level error controller).
pub fn error_reductions(
    level: ModelLevel,
    r: Refinement,
    errs: &ErrorTriple,
    cfg: &StrategyConfig,
) -> ErrorReductions {
    let current = level.refined(r.model).expect("model refinement beyond M1");
    let space_here = predicted_space_error(current, errs.space, r.space, cfg);
    let time_here = predicted_time_error(current, errs.time, r.time, cfg);

    // Difference of the two pipe sums, so that exposed discretisation
    // errors offset the model gain.
    let model = current.finer().map(|up| {
        let here = predicted_model_error(level, errs.model, r.model, cfg) + space_here + time_here;
        let after = predicted_model_error(level, errs.model, r.model + 1, cfg)
            + predicted_space_error(up, errs.space, r.space, cfg)
            + predicted_time_error(up, errs.time, r.time, cfg);
        here - after
    });

    ErrorReductions {
        model,
        space: space_here - predicted_space_error(current, errs.space, r.space + 1, cfg),
        time: time_here - predicted_time_error(current, errs.time, r.time + 1, cfg),
    }
}

/// Largest available value with ties broken model, then space, then time.
pub fn best_option(values: &ErrorReductions) -> (f64, RefinementKind) {
    let mut best = (values.space, RefinementKind::Space);
    if let Some(m) = values.model {
        if m >= best.0 {
            best = (m, RefinementKind::Model);
        }
    }
    if values.time > best.0 {
        best = (values.time, RefinementKind::Time);
    }
    best
}

/// Best single refinement of a pipe and its net error reduction.
pub fn error_reduction(
    level: ModelLevel,
    r: Refinement,
    errs: &ErrorTriple,
    cfg: &StrategyConfig,
) -> (f64, RefinementKind) {
    best_option(&error_reductions(level, r, errs, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const M2: ModelLevel = ModelLevel::Semilinear;
    const M3: ModelLevel = ModelLevel::Algebraic;

    #[test]
    fn safety_factor() {
        assert_eq!(safety(0, 1.1), 1.0);
        assert_eq!(safety(3, 1.1), 1.1);
        assert_eq!(safety(1, 2.0), 2.0);
    }

    #[test]
    fn space_error_examples() {
        let cfg = StrategyConfig::default();
        assert_eq!(predicted_space_error(M3, 0.2, 5, &cfg), 0.0);
        assert_eq!(predicted_space_error(M2, 0.2, 0, &cfg), 0.2);
        assert_relative_eq!(
            predicted_space_error(M2, 0.2, 1, &cfg),
            0.055,
            max_relative = 1e-15
        );
    }

    #[test]
    fn time_error_examples() {
        let cfg = StrategyConfig::default();
        assert_relative_eq!(
            predicted_time_error(M2, 0.1, 2, &cfg),
            0.0275,
            max_relative = 1e-15
        );
        assert_eq!(predicted_time_error(M3, 0.7, 0, &cfg), 0.0);
        assert_eq!(predicted_time_error(M2, 0.0, 4, &cfg), 0.0);
    }

    #[test]
    fn model_switch_from_m3() {
        let cfg = StrategyConfig::default();
        let errs = ErrorTriple::new(0.8, 0.1, 0.1);
        let red = error_reductions(M3, Refinement::ZERO, &errs, &cfg);
        assert_eq!(red.model.unwrap(), 0.4);
        assert_eq!(
            error_reduction(M3, Refinement::ZERO, &errs, &cfg).1,
            RefinementKind::Model
        );
    }

    #[test]
    fn no_model_option_on_m1() {
        let cfg = StrategyConfig::default();
        let errs = ErrorTriple::new(0.0, 0.2, 0.1);
        let red = error_reductions(M2, Refinement::new(1, 0, 0), &errs, &cfg);
        assert_eq!(red.model, None);
        let (b, kind) = best_option(&red);
        assert_eq!(kind, RefinementKind::Space);
        assert_eq!(b, red.space.max(red.time));
    }

    #[test]
    fn space_refinement_delta() {
        let cfg = StrategyConfig::default();
        let errs = ErrorTriple::new(0.0, 0.2, 0.0);
        let red = error_reductions(M2, Refinement::ZERO, &errs, &cfg);
        assert_relative_eq!(red.space, 0.145, max_relative = 1e-14);
    }

    #[test]
    fn pipe_sums() {
        let cfg = StrategyConfig::default();
        assert_eq!(
            pipe_error_sum(&ErrorTriple::default(), M3, Refinement::new(2, 3, 1), &cfg),
            0.0
        );
        let e = ErrorTriple::new(0.3, 0.2, 0.1);
        assert_eq!(
            pipe_error_sum(&e, M2, Refinement::ZERO, &cfg),
            e.model + e.space + e.time
        );
        let e = ErrorTriple::new(0.8, 0.1, 0.1);
        let after = pipe_error_sum(&e, M3, Refinement::new(1, 0, 0), &cfg);
        assert_relative_eq!(after, 0.2 + 0.1 + 0.1, max_relative = 1e-15);
    }

    #[test]
    fn replaying_model_switches_step_by_step() {
        // Removing F_m(3,2) e_m and then F_m(2,1) e_m, as the pipe-level
        // controller does switch by switch.
        let cfg = StrategyConfig::default();
        for e_m in [0.0, 0.37, 0.8, 1.0] {
            let mut replay = e_m;
            let mut level = M3;
            for r_m in 1..=2u32 {
                replay -= cfg.model_reduction(level) * e_m;
                level = level.finer().unwrap();
                assert_relative_eq!(
                    predicted_model_error(M3, e_m, r_m, &cfg),
                    replay,
                    epsilon = 1e-15
                );
            }
            assert!(predicted_model_error(M3, e_m, 2, &cfg).abs() < 1e-15);
        }
    }

    #[test]
    fn pipe_starting_on_m2_loses_its_model_error_on_m1() {
        let cfg = StrategyConfig::default();
        assert_eq!(predicted_model_error(M2, 0.4, 1, &cfg), 0.0);
        let red = error_reductions(M2, Refinement::ZERO, &ErrorTriple::new(0.4, 0.0, 0.0), &cfg);
        assert_relative_eq!(red.model.unwrap(), 0.4);
    }

    #[test]
    fn tie_breaking_prefers_model_then_space() {
        let r = ErrorReductions {
            model: Some(0.1),
            space: 0.1,
            time: 0.1,
        };
        assert_eq!(best_option(&r).1, RefinementKind::Model);
        let r = ErrorReductions {
            model: None,
            space: 0.1,
            time: 0.1,
        };
        assert_eq!(best_option(&r).1, RefinementKind::Space);
    }

    #[test]
    fn config_validation() {
        assert!(StrategyConfig::default().validate().is_ok());
        let mut cfg = StrategyConfig::default();
        cfg.safety_factor = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = StrategyConfig::default();
        cfg.space_amplification[2] = 0.5;
        assert!(cfg.validate().is_err());
    }

    fn arb_state() -> impl Strategy<Value = (ModelLevel, Refinement, ErrorTriple, f64)> {
        (
            1u8..=3,
            0u32..=2,
            0u32..8,
            0u32..8,
            0.0..1.0f64,
            0.0..0.3f64,
            0.0..0.3f64,
            1.01..1.9f64,
        )
            .prop_filter_map(
                "model refinement within hierarchy",
                |(lvl, rm, rx, rt, em, ex, et, fr)| {
                    let level = ModelLevel::from_index(lvl).unwrap();
                    (rm <= level.headroom()).then(|| {
                        (
                            level,
                            Refinement::new(rm, rx, rt),
                            ErrorTriple::new(em, ex, et),
                            fr,
                        )
                    })
                },
            )
    }

    proptest! {
        #[test]
        fn reduction_matches_difference_of_sums((level, r, errs, fr) in arb_state()) {
            let cfg = StrategyConfig { safety_factor: fr, ..StrategyConfig::default() };
            let before = pipe_error_sum(&errs, level, r, &cfg);
            let red = error_reductions(level, r, &errs, &cfg);
            for kind in [RefinementKind::Model, RefinementKind::Space, RefinementKind::Time] {
                if let Some(delta) = red.get(kind) {
                    let after = pipe_error_sum(&errs, level, r.bumped(kind), &cfg);
                    prop_assert!((before - after - delta).abs() <= 1e-14 * (1.0 + before));
                }
            }
            let (best, _) = error_reduction(level, r, &errs, &cfg);
            prop_assert!(best >= red.space && best >= red.time);
        }

        #[test]
        fn predictions_are_nonnegative_and_monotone(e in 0.0..1.0f64, r in 1u32..20, fr in 1.01..3.0f64) {
            let cfg = StrategyConfig { safety_factor: fr, ..StrategyConfig::default() };
            for m in ModelLevel::ALL {
                let a = predicted_space_error(m, e, r, &cfg);
                let b = predicted_space_error(m, e, r + 1, &cfg);
                prop_assert!(a >= 0.0 && b <= a);
                let a = predicted_time_error(m, e, r, &cfg);
                let b = predicted_time_error(m, e, r + 1, &cfg);
                prop_assert!(a >= 0.0 && b <= a);
            }
        }
    }
}
