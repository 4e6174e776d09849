//! Worked examples through the public API, each with a hand or brute-force oracle.

mod common;

use common::*;
use oscnorm::families::FamilyClass;
use oscnorm::poly::scale_exponent;
use oscnorm::rearrange::{bds, llogl, weak_lp, young_llogl};
use oscnorm::verify::{generate, load_json, run_suite, save_json, Generator, Suite, SuiteConfig, SuiteReport};
use oscnorm::*;

fn g1(v: &[f64]) -> Grid {
    Grid::new(1, v.len().trailing_zeros(), v.to_vec()).unwrap()
}

fn cube(level: u32, x: u32) -> CubeId {
    CubeId::new(level, &[x]).unwrap()
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn bisection() {
    let root = CubeId::root(1);
    assert_eq!(root.children(), vec![cube(1, 0), cube(1, 1)]);
    let sq = CubeId::root(2).children();
    assert_eq!(sq.len(), 4);
    assert!(sq.iter().all(|c| c.measure::<f64>() == 0.25));
    let tree = DyadicTree::new(1, 2).unwrap();
    assert!(tree.children(&cube(2, 0)).is_err());
}

#[test]
fn averages_and_moments() {
    close(g1(&[0.0, 1.0]).average(&CubeId::root(1)), 0.5);
    close(g1(&[1.0, 0.0, 0.0, 0.0]).average(&cube(1, 0)), 0.5);
    let seven = Grid::constant(2, 2, 7.0).unwrap();
    for idx in 0..seven.tree().node_count() {
        close(seven.average(&seven.tree().cube(idx)), 7.0);
    }
    let one = MomentTable::with_order(&Grid::constant(1, 3, 1.0).unwrap(), 2);
    close(one.moment(&CubeId::root(1), &[1]).unwrap(), 0.5);
    let step = MomentTable::with_order(&g1(&[0.0, 1.0]), 2);
    // ∫_{1/2}^1 x dx
    close(step.moment(&CubeId::root(1), &[1]).unwrap(), 0.375);
    let spike = MomentTable::with_order(&g1(&[1.0, 0.0, 0.0, 0.0]), 2);
    close(spike.moment(&CubeId::root(1), &[0]).unwrap(), 0.25);
}

/// `∫ |f - c|` minimized over the cell values, which contain a minimizer.
fn l1_by_enumeration(v: &[f64]) -> (f64, f64) {
    let h = 1.0 / v.len() as f64;
    let mut cands = v.to_vec();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands
        .iter()
        .map(|&c| (c, v.iter().map(|x| (x - c).abs()).sum::<f64>() * h))
        .fold(
            (f64::NAN, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

#[test]
fn best_constants_in_l1() {
    let root = CubeId::root(1);
    for v in [vec![0.0, 1.0], vec![1.0, 2.0, 3.0, 10.0]] {
        let fit = best_fit(&g1(&v), &root, 1, 1).unwrap();
        let (c, e) = l1_by_enumeration(&v);
        close(fit.error, e);
        close(fit.eval([0.5, 0.0]), c);
    }
    close(best_fit(&g1(&[1.0, 2.0, 3.0, 10.0]), &root, 1, 1).unwrap().error, 2.5);
}

#[test]
fn affine_fit_in_l2() {
    // Projection of the step onto {1, x - 1/2}: mean 1/2, slope coefficient
    // 3/4 on the normalized Legendre polynomial; residual 1/2 - 1/4 - 3/16.
    let fit = best_fit(&g1(&[0.0, 1.0]), &CubeId::root(1), 2, 2).unwrap();
    close(fit.error, (0.5f64 - 0.25 - 3.0 / 16.0).sqrt());
    close(fit.error, 0.25);
    let c = Grid::constant(2, 2, -3.0).unwrap();
    for (k, q) in [(1, 1), (2, 1), (3, 1), (1, 2), (3, 2)] {
        assert!(best_fit(&c, &CubeId::root(2), k, q).unwrap().error.abs() < 1e-12);
    }
}

#[test]
fn scaling_conventions() {
    let f = g1(&[0.0, 1.0]);
    for conv in [Convention::V, Convention::SV] {
        close(scaled_error(&f, &CubeId::root(1), 1, 1, 0.0, conv).unwrap(), 0.5);
        close(scaled_error(&f, &CubeId::root(1), 1, 1, 0.7, conv).unwrap(), 0.5);
    }
    let quarter = 0.25f64;
    close(quarter.powf(scale_exponent(1, 2, 1.0, Convention::V)), 0.5);
    close(quarter.powf(scale_exponent(1, 2, 1.0, Convention::SV)), 1.0);
}

#[test]
fn maximal_examples() {
    let f = g1(&[1.0, 0.0, 0.0, 0.0]);
    let m = fractional_maximal(&f, 1.0, 0.0).unwrap();
    assert_eq!(m.values.values(), &[1.0, 0.5, 0.25, 0.25]);
    assert_eq!(m.values.values(), maximal(f.values(), 1, 2, 1.0, 0.0).as_slice());
    let one = Grid::constant(1, 3, 1.0).unwrap();
    for (q, lambda) in [(1.0, 0.0), (2.0, 0.5), (3.0, 0.9)] {
        let m = fractional_maximal(&one, q, lambda).unwrap();
        assert!(m.values.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }
    let g = g1(&[0.0, 1.0]).shifted(-0.5);
    assert!(fractional_maximal(&g, 1.0, 0.0)
        .unwrap()
        .values
        .values()
        .iter()
        .all(|v| *v == 0.5));
}

#[test]
fn lp_norm_examples() {
    close(lp_norm(&Grid::constant(1, 2, -3.0).unwrap(), 2.5).unwrap(), 3.0);
    close(lp_norm(&g1(&[1.0, 0.0, 0.0, 0.0]), 1.0).unwrap(), 0.25);
    close(lp_norm(&g1(&[1.0, 0.5, 0.25, 0.25]), 1.0).unwrap(), 0.5);
    close(maximal_opnorm_bound(2.0).unwrap(), 2.0);
    close(maximal_opnorm_bound(4.0 / 3.0).unwrap(), 4.0);
    let eps = 1e-6;
    assert!(maximal_opnorm_bound(1.0 + eps).unwrap() > 0.9 / eps);
}

#[test]
fn sparse_validation() {
    let tree = DyadicTree::new(1, 2).unwrap();
    let root = CubeId::root(1);
    let ok = |cubes: &[CubeId], order: f64| validate(tree, cubes, FamilyClass::Sparse { order }).is_ok();
    assert!(ok(&[root, cube(1, 0)], 1.0));
    let v = validate(tree, &[root, cube(1, 0), cube(1, 1)], FamilyClass::sparse()).unwrap_err();
    assert_eq!(v.cube, Some(root));
    assert!(ok(&[root, cube(2, 0)], 0.5));
    assert!(!ok(&[root, cube(1, 0)], 0.5));
}

#[test]
fn family_counts() {
    let count = |depth, class| enumerate_families(1, depth, class).unwrap().count();
    assert_eq!(count(1, FamilyClass::Packing), 4);
    assert_eq!(count(1, FamilyClass::sparse()), 6);
    assert_eq!(count(0, FamilyClass::sparse()), 1);
    // Brute force over all subsets of the 7-node tree.
    let cs = cubes(1, 2);
    let brute = (1u64..1 << cs.len())
        .filter(|&m| is_sparse(&cs, &members(m, cs.len()), 1.0))
        .count();
    assert_eq!(count(2, FamilyClass::sparse()), brute);
}

#[test]
fn stopping_time_examples() {
    let fam = cz_family(&Grid::constant(1, 3, 2.0).unwrap(), 2.0).unwrap();
    assert_eq!(fam.cubes(), &[CubeId::root(1)]);
    let fam = cz_family(&g1(&[1.0, 0.0, 0.0, 0.0]), 2.0).unwrap();
    assert_eq!(fam.cubes(), &[CubeId::root(1), cube(2, 0)]);
    let fam = cz_family(&g1(&[0.75, 0.25, 0.25, 0.25]), 2.0).unwrap();
    assert_eq!(fam.cubes(), &[CubeId::root(1)]);
}

#[test]
fn packing_examples() {
    for p in [1.0, 2.0, 3.5, f64::INFINITY] {
        let r = packing_sup_norm(&g1(&[0.0, 1.0]), &Params::jn(p)).unwrap();
        close(r.value(), 0.5);
        assert_eq!(r.witness.cubes(), &[CubeId::root(1)]);
        let r = packing_sup_norm(&g1(&[0.0, 1.0, 0.0, 1.0]), &Params::jn(p)).unwrap();
        close(r.value(), 0.5);
        assert_eq!(r.witness.cubes(), &[CubeId::root(1)]);
    }
    let c = Grid::constant(1, 3, 4.0).unwrap();
    for params in [Params::jn(2.0), Params::v(2, 2, 0.5, 3.0), Params::bmo()] {
        assert!(packing_sup_norm(&c, &params).unwrap().value().abs() < 1e-12);
    }
    let f = g1(&[0.3, -1.2, 2.0, 0.1]);
    let r = packing_sup_norm(&f, &Params::riesz(3.0)).unwrap();
    close(r.value(), lp(f.values(), 3.0));
    assert!(r.witness.cubes().iter().all(|c| c.level() == 2));
}

#[test]
fn sparse_examples() {
    for p in [1.0, 2.0, 4.0] {
        let r = sparse_sup_exhaustive(&g1(&[0.0, 1.0]), &Params::sjn(p)).unwrap();
        close(r.value(), 0.5);
        assert_eq!(r.witness.cubes(), &[CubeId::root(1)]);
    }
    close(
        sparse_sup_exhaustive(&g1(&[0.0, 1.0, 0.0, 1.0]), &Params::sjn(2.0))
            .unwrap()
            .value(),
        0.5,
    );
    assert_eq!(
        sparse_sup_exhaustive(&Grid::constant(1, 2, 1.0).unwrap(), &Params::sjn(2.0))
            .unwrap()
            .value(),
        0.0
    );

    let b = sparse_norm_bounds(&g1(&[0.0, 1.0]), &Params::sjn(2.0)).unwrap();
    close(b.value_lower, 0.5);
    close(b.value_upper, 1.0);
    let b = sparse_norm_bounds(&Grid::constant(1, 4, 2.0).unwrap(), &Params::sjn(2.0)).unwrap();
    assert_eq!((b.value_lower, b.value_upper), (0.0, 0.0));
    let b = sparse_norm_bounds(&g1(&[0.0, 1.0, 0.0, 1.0]), &Params::sjn(2.0)).unwrap();
    assert!(b.value_lower <= 0.5 + 1e-15 && b.value_upper >= 0.5);
    close(b.value_upper, 1.0);
}

#[test]
fn garo_examples() {
    for p in [1.5, 2.0, 8.0, f64::INFINITY] {
        let r = garo_norm(&g1(&[0.0, 1.0]), p).unwrap();
        close(r.value(), 0.5);
        assert_eq!(r.witness.cubes(), &[CubeId::root(1)]);
        assert_eq!(garo_norm(&Grid::constant(1, 3, 5.0).unwrap(), p).unwrap().value(), 0.0);
    }
    for i in 0..1000 {
        let depth = 1 + (i % 4) as u32;
        let f = Grid::new(1, depth, uniform(1, depth, 500 + i, -1.0, 1.0)).unwrap();
        for p in [1.5, 3.0] {
            let g = garo_norm(&f, p).unwrap().value();
            let j = packing_sup_norm(&f, &Params::jn(p)).unwrap().value();
            assert!(g <= j * (1.0 + 1e-12), "{g} > {j}");
        }
    }
    assert!(garo_norm(&g1(&[0.0, 1.0]), 1.0).is_err());
}

#[test]
fn rearrangement_examples() {
    let f = g1(&[3.0, 1.0, 2.0, 2.0]);
    let r = rearrangement(&f);
    assert_eq!(r.blocks(), &[3.0, 2.0, 2.0, 1.0]);
    close(r.double_star(1.0), 2.0);
    close(r.star_left(1.0), 1.0);
    let t = 1.0 - 1e-13;
    assert!((r.double_star(t) - r.star(t) - 1.0).abs() < 1e-9);
    // Largest gap: mean of the first three blocks minus the fourth.
    close(bds(&f), 7.0 / 3.0 - 1.0);

    let c = Grid::constant(1, 2, -4.0).unwrap();
    assert!((0..4).all(|i| rearrangement(&c).star(i as f64 / 4.0) == 4.0));
    assert_eq!(bds(&c), 0.0);

    close(weak_lp(&g1(&[1.0, 0.0, 0.0, 0.0]), 2.0).unwrap(), 0.5);
    let z = Grid::constant(1, 2, 0.0).unwrap();
    let v = ri_functionals(&z, 2.0).unwrap();
    assert_eq!((v.weak_lp, v.llogl, v.bds), (0.0, 0.0, 0.0));

    let mu = llogl(&Grid::constant(1, 0, 1.0).unwrap());
    assert!((young_llogl(1.0 / mu) - 1.0).abs() < 1e-9);
    assert!((mu - 1.256_750_618_537_767).abs() < 1e-9);
}

#[test]
fn suite_examples() {
    let cfg = SuiteConfig {
        p: vec![2.0],
        ..SuiteConfig::new(Suite::Riesz)
    };
    let r = run_suite(&cfg).unwrap();
    let c = r.check("zero-approximation packing sup = L^p norm").unwrap();
    assert_eq!((c.samples, c.violations), (100, 0));

    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    save_json(&r, &a).unwrap();
    let back: SuiteReport = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(back, r);
    save_json(&back, &b).unwrap();
    assert!(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap());
    // Identical configurations give identical bytes.
    save_json(&run_suite(&cfg).unwrap(), &b).unwrap();
    assert!(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap());
    assert_eq!(load_json(&a).unwrap()["schema"], 1);
}

#[test]
fn witnesses_recompute_reported_values() {
    let r = run_suite(&SuiteConfig {
        trials: 10,
        p: vec![2.0],
        ..SuiteConfig::new(Suite::SparseJn)
    })
    .unwrap();
    for row in &r.rows {
        let f = generate(&Generator::UniformIid, 1, 2, row.seed).unwrap();
        let fam = row.witness.clone().unwrap().into_family().unwrap();
        let w = local_weights(&f, &Params::sjn(2.0)).unwrap();
        close(norms::evaluate_family(&w, &fam, 2.0), row.values["sjn_p2"]);
    }
}

#[test]
fn generator_golden_values() {
    let f = generate(&Generator::UniformIid, 1, 1, 42).unwrap();
    let bits: Vec<u64> = f.values().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits, GOLDEN_UNIFORM_42);
    assert_eq!(
        generate(&Generator::Step, 1, 3, 0).unwrap().values(),
        &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    );
    let f = generate(&Generator::LogSingularity, 1, 2, 0).unwrap();
    let anti = |x: f64| if x == 0.0 { 0.0 } else { x - x * x.ln() };
    for (i, v) in f.values().iter().enumerate() {
        let (a, b) = (i as f64 / 4.0, (i + 1) as f64 / 4.0);
        close(*v, (anti(b) - anti(a)) * 4.0);
    }
}

const GOLDEN_UNIFORM_42: [u64; 2] = [4604317194420431787, 4606734539489062706];
