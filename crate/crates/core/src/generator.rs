//! Seeded random fleet generator and constant-demand construction.
//!
//! The stream comes from `ChaCha8Rng::seed_from_u64(seed)`. Each machine
//! draws `rul_max` then `pmax0`, in machine order, with `rand`'s inclusive
//! uniform float sampler. Both are value-stable across the 0.8/0.3 releases
//! of `rand`/`rand_chacha`, so a seed names the same fleet across builds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DemandProfile, FleetInstance, MachineSpec};
use crate::error::DomainError;

/// Nominal output as a share of the initial maximum.
pub const NOMINAL_RATIO: f64 = 0.75;

/// Load factors used by the default benchmark grid.
pub const DEFAULT_ALPHAS: [f64; 7] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub m: usize,
    pub seed: u64,
    pub rul_center: f64,
    pub rul_spread: f64,
    pub pmax_center: f64,
    pub pmax_spread: f64,
    pub pmin_ratio: f64,
    pub pnom_ratio: f64,
}

impl GeneratorConfig {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            seed,
            rul_center: 1500.0,
            rul_spread: 0.20,
            pmax_center: 500.0,
            pmax_spread: 0.05,
            pmin_ratio: 0.15,
            pnom_ratio: NOMINAL_RATIO,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |msg: &str| Err(DomainError::InvalidConfig(msg.to_string()));
        if self.m == 0 {
            return bad("m must be >= 1");
        }
        if !(self.rul_center > 0.0 && self.pmax_center > 0.0) {
            return bad("centers must be > 0");
        }
        if !(0.0..1.0).contains(&self.rul_spread) || !(0.0..1.0).contains(&self.pmax_spread) {
            return bad("spreads must lie in [0, 1)");
        }
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.pmin_ratio) || !open_unit(self.pnom_ratio) {
            return bad("ratios must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Demand as a fraction of the fleet's nominal total output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadFactor(f64);

impl LoadFactor {
    pub fn new(alpha: f64) -> Result<Self, DomainError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(DomainError::InvalidConfig(format!(
                "load factor must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self(alpha))
    }

    /// Accepts `alpha = 0` as well, for degenerate no-demand profiles.
    pub fn new_allow_zero(alpha: f64) -> Result<Self, DomainError> {
        if alpha == 0.0 {
            Ok(Self(0.0))
        } else {
            Self::new(alpha)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn generate_fleet(cfg: &GeneratorConfig) -> Result<FleetInstance, DomainError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rul_range = (cfg.rul_center * (1.0 - cfg.rul_spread), cfg.rul_center * (1.0 + cfg.rul_spread));
    let pmax_range = (
        cfg.pmax_center * (1.0 - cfg.pmax_spread),
        cfg.pmax_center * (1.0 + cfg.pmax_spread),
    );
    let machines = (0..cfg.m)
        .map(|_| {
            let rul_max = rng.gen_range(rul_range.0..=rul_range.1);
            let pmax0 = rng.gen_range(pmax_range.0..=pmax_range.1);
            MachineSpec::from_rul(pmax0, cfg.pmin_ratio * pmax0, rul_max)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FleetInstance {
        machines,
        slot_hours: 1.0,
        seed: Some(cfg.seed),
    })
}

/// Sum of `pnom_ratio * pmax0` over the fleet.
pub fn nominal_total(instance: &FleetInstance, pnom_ratio: f64) -> f64 {
    instance.machines.iter().map(|m| pnom_ratio * m.pmax0).sum()
}

/// `alpha * nominal_total` at every slot `0..=horizon`.
pub fn constant_demand(instance: &FleetInstance, alpha: LoadFactor, horizon: usize) -> DemandProfile {
    let sigma = alpha.value() * nominal_total(instance, NOMINAL_RATIO);
    DemandProfile::constant(sigma, horizon).expect("non-negative constant demand")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fleet(pmax: &[f64]) -> FleetInstance {
        FleetInstance::new(
            pmax.iter()
                .map(|&p| MachineSpec::from_rul(p, 0.15 * p, 1500.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_fleet() {
        let cfg = GeneratorConfig::new(25, 42);
        assert_eq!(generate_fleet(&cfg).unwrap(), generate_fleet(&cfg).unwrap());
        let other = generate_fleet(&GeneratorConfig::new(25, 43)).unwrap();
        assert_ne!(generate_fleet(&cfg).unwrap(), other);
    }

    #[test]
    fn defaults_stay_in_range() {
        let inst = generate_fleet(&GeneratorConfig::new(200, 7)).unwrap();
        assert_eq!(inst.seed, Some(7));
        for m in &inst.machines {
            assert!((1200.0..=1800.0).contains(&m.rul_max));
            assert!((475.0..=525.0).contains(&m.pmax0));
            assert_eq!(m.pmin, 0.15 * m.pmax0);
            assert_eq!(m.slope, -m.pmax0 / m.rul_max);
        }
    }

    #[test]
    fn prefix_is_stable_across_fleet_sizes() {
        let small = generate_fleet(&GeneratorConfig::new(3, 9)).unwrap();
        let large = generate_fleet(&GeneratorConfig::new(10, 9)).unwrap();
        assert_eq!(small.machines[..], large.machines[..3]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_fleet(&GeneratorConfig::new(0, 1)).is_err());
        let mut cfg = GeneratorConfig::new(2, 1);
        cfg.rul_spread = 1.0;
        assert!(generate_fleet(&cfg).is_err());
        let mut cfg = GeneratorConfig::new(2, 1);
        cfg.pmin_ratio = 0.0;
        assert!(generate_fleet(&cfg).is_err());
    }

    #[test]
    fn nominal_total_examples() {
        assert_relative_eq!(nominal_total(&fleet(&[500.0]), 0.75), 375.0);
        assert_relative_eq!(nominal_total(&fleet(&[500.0; 4]), 0.75), 1500.0);
        assert_relative_eq!(nominal_total(&fleet(&[480.0, 520.0]), 0.75), 750.0);
    }

    #[test]
    fn constant_demand_examples() {
        let inst = fleet(&[500.0]);
        let zero = constant_demand(&inst, LoadFactor::new_allow_zero(0.0).unwrap(), 5);
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let d = constant_demand(&inst, LoadFactor::new(0.4).unwrap(), 3);
        assert!(d.values().iter().all(|&v| (v - 150.0).abs() < 1e-12));
        assert_eq!(constant_demand(&inst, LoadFactor::new(0.4).unwrap(), 99).slots(), 100);
    }

    #[test]
    fn load_factor_bounds() {
        assert!(LoadFactor::new(0.0).is_err());
        assert!(LoadFactor::new(1.1).is_err());
        assert!(LoadFactor::new(1.0).is_ok());
    }
}
