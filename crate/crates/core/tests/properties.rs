use fleetsched::evaluation::{production_horizon, upper_bound, DEFAULT_HORIZON_TOL};
use fleetsched::generator::{generate_fleet, GeneratorConfig};
use fleetsched::mirror_prox::{h_dem, MirrorProxConfig};
use fleetsched::projection::{clip_to_fmax, project_onto_demand, solve_projections, ProjectionConfig};
use fleetsched::{
    check_feasibility, fmax_step, roll_fmax, DemandProfile, FleetInstance, FmaxParams, MachineSpec, PowerSchedule,
};
use ndarray::Array2;
use proptest::prelude::*;

fn machine() -> impl Strategy<Value = MachineSpec> {
    (1.0..600.0f64, 5.0..2000.0f64).prop_map(|(p, r)| MachineSpec::from_rul(p, 0.15 * p, r).unwrap())
}

/// A fleet with a schedule whose entries lie in `[0, 1.2 * pmax0]`.
fn fleet_and_schedule() -> impl Strategy<Value = (FleetInstance, PowerSchedule)> {
    (1usize..4, 1usize..12).prop_flat_map(|(m, slots)| {
        (
            prop::collection::vec(machine(), m),
            prop::collection::vec(0.0..1.2f64, m * slots),
        )
            .prop_map(move |(machines, shares)| {
                let inst = FleetInstance::new(machines).unwrap();
                let f = Array2::from_shape_fn((m, slots), |(j, t)| shares[j * slots + t] * inst.machines[j].pmax0);
                (inst, PowerSchedule::new(f).unwrap())
            })
    })
}

proptest! {
    #[test]
    fn rolled_fmax_rows_never_increase((inst, sched) in fleet_and_schedule()) {
        let fmax = roll_fmax(&sched, &inst, &FmaxParams::default()).unwrap();
        for (j, row) in fmax.matrix().rows().into_iter().enumerate() {
            prop_assert_eq!(row[0], inst.machines[j].pmax0);
            for w in row.to_vec().windows(2) {
                prop_assert!(w[1] <= w[0] && w[1] >= 0.0);
            }
        }
    }

    #[test]
    fn fmax_step_is_antitone_in_use(prev in 0.0..600.0f64, a in 0.0..600.0f64, b in 0.0..600.0f64, m in machine()) {
        let params = FmaxParams::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at_lo = fmax_step(prev, lo, &m, &params).unwrap();
        let at_hi = fmax_step(prev, hi, &m, &params).unwrap();
        prop_assert!(at_hi <= at_lo);
        prop_assert_eq!(fmax_step(prev, 0.0, &m, &params).unwrap(), prev);
    }

    #[test]
    fn clipping_to_own_roll_is_feasible((inst, sched) in fleet_and_schedule()) {
        let params = FmaxParams::default();
        let fmax = roll_fmax(&sched, &inst, &params).unwrap();
        let clipped = clip_to_fmax(&sched, &fmax).unwrap();
        // clipping can only lower usage, so the re-rolled fmax is no lower
        let report = check_feasibility(&clipped, &inst, &params, 1e-12).unwrap();
        prop_assert!(report.is_feasible(), "{:?}", report.violations.first());
        for (c, cap) in clipped.matrix().iter().zip(fmax.matrix()) {
            prop_assert!(*c <= *cap);
        }
    }

    #[test]
    fn projection_only_raises_and_respects_caps(
        (inst, sched) in fleet_and_schedule(),
        sigma_share in 0.0..1.5f64,
        delta_t in 1usize..4,
    ) {
        let fmax = roll_fmax(&PowerSchedule::zeros(inst.len(), sched.slots()), &inst, &FmaxParams::default()).unwrap();
        let total: f64 = inst.machines.iter().map(|m| m.pmax0).sum();
        let demand = DemandProfile::constant(sigma_share * total, sched.slots() - 1).unwrap();
        let out = project_onto_demand(&sched, &fmax, &demand, delta_t).unwrap();
        for ((o, s), cap) in out.matrix().iter().zip(sched.matrix()).zip(fmax.matrix()) {
            prop_assert!(*o >= *s);
            prop_assert!(*o == *s || *o <= *cap);
        }
    }

    #[test]
    fn h_dem_grows_as_output_falls(base in 0.1..10.0f64, drop in 0.001..0.1f64, sigma in 5.0..10.0f64) {
        let demand = DemandProfile::new(vec![sigma]).unwrap();
        let gamma = MirrorProxConfig::default().gamma;
        let hi = PowerSchedule::from_rows(vec![vec![base]]).unwrap();
        let lo = PowerSchedule::from_rows(vec![vec![(base - drop).max(0.0)]]).unwrap();
        prop_assume!(base - drop >= 0.0 && -gamma * (base - drop - sigma) < 700.0);
        prop_assert!(h_dem(&lo, &demand, gamma).unwrap() > h_dem(&hi, &demand, gamma).unwrap());
    }

    #[test]
    fn horizon_is_monotone_in_output((_inst, sched) in fleet_and_schedule(), bump in 0.0..50.0f64, sigma in 0.0..900.0f64) {
        let demand = DemandProfile::constant(sigma, sched.slots() - 1).unwrap();
        let raised = PowerSchedule::new(sched.matrix().mapv(|f| f + bump)).unwrap();
        let before = production_horizon(&sched, &demand, DEFAULT_HORIZON_TOL).unwrap();
        let after = production_horizon(&raised, &demand, DEFAULT_HORIZON_TOL).unwrap();
        prop_assert!(after >= before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_solver_is_feasible_and_bounded(m in 1usize..4, seed in 0u64..1000, alpha in 0.3..0.9f64) {
        let inst = generate_fleet(&GeneratorConfig::new(m, seed)).unwrap();
        let sigma = alpha * 0.75 * inst.machines.iter().map(|mc| mc.pmax0).sum::<f64>();
        let ub = upper_bound(&inst, sigma).unwrap();
        let demand = DemandProfile::constant(sigma, (1.2 * ub as f64).ceil() as usize).unwrap();
        let cfg = ProjectionConfig::default();
        let res = solve_projections(&inst, &demand, &cfg, &PowerSchedule::zeros(m, demand.slots())).unwrap();
        let report = check_feasibility(&res.schedule, &inst, &cfg.fmax_params, 1e-9).unwrap();
        prop_assert!(report.is_feasible());
        prop_assert!(production_horizon(&res.schedule, &demand, DEFAULT_HORIZON_TOL).unwrap() as u64 <= ub);
    }
}

#[test]
fn generator_distribution_over_ten_thousand_draws() {
    let inst = generate_fleet(&GeneratorConfig::new(10_000, 2024)).unwrap();
    let (rul, pmax): (Vec<f64>, Vec<f64>) = inst.machines.iter().map(|m| (m.rul_max, m.pmax0)).unzip();
    let check = |values: &[f64], lo: f64, hi: f64, center: f64| {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!(min >= lo && max <= hi, "range [{min}, {max}] outside [{lo}, {hi}]");
        assert!((mean - center).abs() <= 0.01 * center, "mean {mean} too far from {center}");
    };
    check(&rul, 1200.0, 1800.0, 1500.0);
    check(&pmax, 475.0, 525.0, 500.0);
}
