use qvix_core::obstacle::{derivative_fd_check, ObstacleMap};
use qvix_core::{
    check_increasing, BoundaryCondition, EllipticOperator, GScalar, Grid, InverseEllipticMap,
    NodalFunction, PlateauMap, PlateauParams, ThermoformingMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

fn random_fn(grid: Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> NodalFunction {
    NodalFunction::new(
        grid,
        (0..grid.n_nodes()).map(|_| rng.gen_range(lo..hi)).collect(),
    )
    .unwrap()
}

fn maps(grid: Grid) -> Vec<(Box<dyn ObstacleMap>, (f64, f64))> {
    let plateau = PlateauMap::new(PlateauParams {
        levels: vec![1.0, 2.0],
        eps: 0.1,
    })
    .unwrap();
    let l = EllipticOperator::assemble(grid, 1.5, BoundaryCondition::Neumann).unwrap();
    let inverse = InverseEllipticMap::new(
        l,
        GScalar::Tanh {
            amplitude: 0.4,
            rate: 2.0,
        },
    )
    .unwrap();
    let mould = NodalFunction::from_fn(grid, |x| 1.0 + 0.3 * (2.0 * x).cos()).unwrap();
    let thermo = ThermoformingMap::new(1.0, 1.0, 0.1, mould).unwrap();
    vec![
        (Box::new(plateau), (1.15, 1.85)),
        (Box::new(inverse), (-1.0, 1.0)),
        (Box::new(thermo), (0.3, 1.0)),
    ]
}

#[test]
fn derivative_matches_difference_quotients() {
    let grid = Grid::unit(41).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (map, (lo, hi)) in maps(grid) {
        for _ in 0..10 {
            let u = random_fn(grid, &mut rng, lo, hi);
            let h = random_fn(grid, &mut rng, -1.0, 1.0);
            let check = derivative_fd_check(map.as_ref(), &u, &h, &STEPS).unwrap();
            let order = check.observed_order.expect("nonzero curvature");
            assert!(
                order >= 0.9,
                "{}: order {order}, errors {:?}",
                map.name(),
                check.errors
            );
        }
    }
}

#[test]
fn derivative_of_zero_direction_vanishes() {
    let grid = Grid::unit(21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (map, (lo, hi)) in maps(grid) {
        let u = random_fn(grid, &mut rng, lo, hi);
        let d = map.derivative(&u, &NodalFunction::zeros(grid)).unwrap();
        assert_eq!(d.max_abs(), 0.0, "{}", map.name());
    }
}

#[test]
fn maps_are_increasing() {
    let grid = Grid::unit(25).unwrap();
    for (seed, (map, _)) in maps(grid).into_iter().enumerate() {
        assert!(
            check_increasing(map.as_ref(), grid, 200, (-0.5, 2.5), seed as u64).unwrap(),
            "{}",
            map.name()
        );
    }
}

#[test]
fn plateau_is_exact_near_levels() {
    let grid = Grid::unit(31).unwrap();
    let map = PlateauMap::new(PlateauParams {
        levels: vec![0.5, 1.0, 2.0],
        eps: 0.1,
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for &y in map.levels() {
        let u = random_fn(grid, &mut rng, y - 0.1, y + 0.1);
        assert!(map.evaluate(&u).unwrap().values().iter().all(|&v| v == y));
    }
}

#[test]
fn temperature_bound_holds() {
    let grid = Grid::unit(33).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let k = rng.gen_range(0.2..3.0);
        let m = rng.gen_range(0.1..2.0);
        let gamma = rng.gen_range(0.01..0.3);
        let mould = random_fn(grid, &mut rng, 0.5, 1.5);
        let map = ThermoformingMap::new(k, m, gamma, mould).unwrap();
        let u = random_fn(grid, &mut rng, -0.5, 1.5);
        let t = map.temperature(&u).unwrap();
        assert!(t.residual <= 1e-11);
        assert!(t.t.v_norm() <= map.temperature_bound() + 1e-12);
        assert!(t.t.min_value() >= -1e-12);
    }
}
