//! Two-area load-frequency-control dynamics. Each area has a first-order
//! governor and turbine, a rotating-mass/load swing equation, and integral
//! AGC control driven by its area control error; the areas couple through
//! a stiff tie-line. Integration is fixed-step explicit Euler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A deterministic step change in area load, p.u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadStep {
    pub t: f64,
    pub area: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgcConfig {
    /// Governor time constant, s.
    pub governor_tc: f64,
    /// Turbine time constant, s.
    pub turbine_tc: f64,
    /// Rotating mass constant M, s.
    pub inertia: f64,
    /// Load damping D, p.u./Hz.
    pub damping: f64,
    /// Governor speed droop R, Hz/p.u.
    pub droop: f64,
    /// Frequency bias B, p.u./Hz.
    pub frequency_bias: f64,
    /// Integral AGC gain K_I.
    pub integral_gain: f64,
    /// Tie-line stiffness T12, p.u./Hz.
    pub tie_stiffness: f64,
    /// Std-dev of the mean-reverting random load process, p.u.
    pub load_noise_std: f64,
    /// Deterministic load step disturbances.
    pub load_steps: Vec<LoadStep>,
}

impl Default for AgcConfig {
    fn default() -> AgcConfig {
        AgcConfig {
            governor_tc: 0.08,
            turbine_tc: 0.3,
            inertia: 10.0,
            damping: 1.0,
            droop: 0.05,
            frequency_bias: 20.6,
            integral_gain: 0.3,
            tie_stiffness: 0.545,
            load_noise_std: 0.004,
            load_steps: Vec::new(),
        }
    }
}

impl AgcConfig {
    fn validate(&self) -> Result<()> {
        let gains = [
            ("governor_tc", self.governor_tc),
            ("turbine_tc", self.turbine_tc),
            ("inertia", self.inertia),
            ("damping", self.damping),
            ("droop", self.droop),
            ("frequency_bias", self.frequency_bias),
            ("integral_gain", self.integral_gain),
            ("tie_stiffness", self.tie_stiffness),
        ];
        for (name, v) in gains {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.load_noise_std < 0.0 {
            return Err(Error::InvalidConfig("load_noise_std must be >= 0".into()));
        }
        for step in &self.load_steps {
            if step.area > 1 {
                return Err(Error::InvalidConfig(format!(
                    "load step area {} out of range (two areas)",
                    step.area
                )));
            }
        }
        Ok(())
    }
}

/// Snapshot of the model at one time step. ACE is recomputed from the
/// frequency and tie-line state each step, not integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgcState {
    pub t: f64,
    pub df1: f64,
    pub df2: f64,
    pub dp_tie: f64,
    pub dp_m1: f64,
    pub dp_m2: f64,
    pub dp_g1: f64,
    pub dp_g2: f64,
    pub ace1: f64,
    pub ace2: f64,
}

impl AgcState {
    pub fn df(&self, area: usize) -> f64 {
        if area == 0 {
            self.df1
        } else {
            self.df2
        }
    }

    pub fn ace(&self, area: usize) -> f64 {
        if area == 0 {
            self.ace1
        } else {
            self.ace2
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.df1, self.df2, self.dp_tie, self.dp_m1, self.dp_m2, self.dp_g1, self.dp_g2,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Runs the two-area model for `horizon` seconds at step `dt`, emitting the
/// state at every grid point including t = 0 and t = horizon. The seed
/// drives only the random load process.
pub fn simulate_agc(
    config: &AgcConfig,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<AgcState>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    if horizon < dt || !horizon.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "horizon {horizon} must be at least one step {dt}"
        )));
    }
    config.validate()?;

    let steps = (horizon / dt + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    // mean reversion keeps the random load bounded over long horizons
    let theta = 0.5;

    let b = config.frequency_bias;
    let tie_coupling = 2.0 * std::f64::consts::PI * config.tie_stiffness;

    let mut df = [0.0f64; 2];
    let mut dp_m = [0.0f64; 2];
    let mut dp_g = [0.0f64; 2];
    let mut ctrl = [0.0f64; 2];
    let mut noise_load = [0.0f64; 2];
    let mut dp_tie = 0.0f64;

    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let ace = [b * df[0] + dp_tie, b * df[1] - dp_tie];

        let state = AgcState {
            t,
            df1: df[0],
            df2: df[1],
            dp_tie,
            dp_m1: dp_m[0],
            dp_m2: dp_m[1],
            dp_g1: dp_g[0],
            dp_g2: dp_g[1],
            ace1: ace[0],
            ace2: ace[1],
        };
        if !state.is_finite() {
            return Err(Error::IntegrationDiverged { step: k, t });
        }
        out.push(state);
        if k == steps {
            break;
        }

        let mut load = [0.0f64; 2];
        for step in &config.load_steps {
            if t >= step.t {
                load[step.area] += step.magnitude;
            }
        }
        if config.load_noise_std > 0.0 {
            for (nl, l) in noise_load.iter_mut().zip(load.iter_mut()) {
                *nl += -theta * *nl * dt
                    + config.load_noise_std * dt.sqrt() * noise.sample(&mut rng);
                *l += *nl;
            }
        }

        let mut next_df = [0.0; 2];
        let mut next_m = [0.0; 2];
        let mut next_g = [0.0; 2];
        for i in 0..2 {
            ctrl[i] += -config.integral_gain * ace[i] * dt;
            next_g[i] = dp_g[i]
                + dt / config.governor_tc * (ctrl[i] - df[i] / config.droop - dp_g[i]);
            next_m[i] = dp_m[i] + dt / config.turbine_tc * (dp_g[i] - dp_m[i]);
            let tie_flow = if i == 0 { dp_tie } else { -dp_tie };
            next_df[i] = df[i]
                + dt / config.inertia
                    * (dp_m[i] - load[i] - tie_flow - config.damping * df[i]);
        }
        dp_tie += dt * tie_coupling * (df[0] - df[1]);
        df = next_df;
        dp_m = next_m;
        dp_g = next_g;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> AgcConfig {
        AgcConfig {
            load_noise_std: 0.0,
            ..AgcConfig::default()
        }
    }

    #[test]
    fn zero_input_stays_at_equilibrium() {
        let states = simulate_agc(&quiet_config(), 5.0, 0.01, 1).unwrap();
        assert_eq!(states.len(), 501);
        for s in &states {
            assert_eq!(s.df1, 0.0);
            assert_eq!(s.df2, 0.0);
            assert_eq!(s.dp_tie, 0.0);
            assert_eq!(s.dp_m1, 0.0);
            assert_eq!(s.ace1, 0.0);
        }
    }

    #[test]
    fn step_load_dips_frequency_then_recovers() {
        let mut config = quiet_config();
        config.load_steps.push(LoadStep {
            t: 1.0,
            area: 0,
            magnitude: 0.01,
        });
        let states = simulate_agc(&config, 60.0, 0.01, 1).unwrap();

        let min_df1 = states.iter().map(|s| s.df1).fold(f64::INFINITY, f64::min);
        assert!(min_df1 < -1e-5, "frequency should dip, min {min_df1}");
        // bounded response
        for s in &states {
            assert!(s.df1.abs() < 1.0 && s.df2.abs() < 1.0);
        }
        // integral control drives the deviation back toward zero
        let final_df1 = states.last().unwrap().df1;
        assert!(
            final_df1.abs() < min_df1.abs() * 0.2,
            "df1 should recover: final {final_df1}, dip {min_df1}"
        );
    }

    #[test]
    fn same_seed_bit_identical() {
        let mut config = AgcConfig::default();
        config.load_steps.push(LoadStep {
            t: 2.0,
            area: 1,
            magnitude: -0.02,
        });
        let a = simulate_agc(&config, 10.0, 0.01, 42).unwrap();
        let b = simulate_agc(&config, 10.0, 0.01, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_agc(&config, 10.0, 0.01, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(simulate_agc(&AgcConfig::default(), 10.0, 0.0, 1).is_err());
        assert!(simulate_agc(&AgcConfig::default(), 0.001, 0.01, 1).is_err());
        let mut config = AgcConfig::default();
        config.inertia = -1.0;
        assert!(simulate_agc(&config, 10.0, 0.01, 1).is_err());
    }

    #[test]
    fn noise_stays_bounded_over_long_horizon() {
        let states = simulate_agc(&AgcConfig::default(), 300.0, 0.01, 7).unwrap();
        for s in &states {
            assert!(s.df1.abs() < 1.0, "df1 {}", s.df1);
            assert!(s.df2.abs() < 1.0, "df2 {}", s.df2);
        }
    }
}
