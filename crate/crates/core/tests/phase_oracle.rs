mod common;

use common::{condition_oracle, dense_grid_root};
use sk_tap::phase::{
    boundary_beta, boundary_scan, condition_registry, parse_grid, region_classify, Region,
};
use sk_tap::{default_rule, ModelParams};

#[test]
fn boundaries_match_dense_grid_at_half_field() {
    let pts = boundary_scan(&[0.5], 1e-10, default_rule()).unwrap();
    let at = dense_grid_root(0.5, 4);
    let tech = dense_grid_root(0.5, 2);
    assert!(
        (pts[0].beta_at - at).abs() < 1e-6,
        "{} vs {at}",
        pts[0].beta_at
    );
    assert!(
        (pts[0].beta_tech - tech).abs() < 1e-6,
        "{} vs {tech}",
        pts[0].beta_tech
    );
}

#[test]
fn boundary_solves_its_condition() {
    let reg = condition_registry();
    for name in ["at", "tech"] {
        let cond = reg.get(name).unwrap();
        let p = if name == "at" { 4 } else { 2 };
        for h in [0.1, 0.7, 1.5] {
            let (beta, _) = boundary_beta(cond, h, 1e-12, default_rule()).unwrap();
            assert!(
                (condition_oracle(beta, h, p) - 1.0).abs() < 1e-8,
                "{name} h={h}"
            );
        }
    }
}

#[test]
fn scan_orders_boundaries() {
    let grid = parse_grid("0.01:2:0.1").unwrap();
    let pts = boundary_scan(&grid, 1e-8, default_rule()).unwrap();
    assert_eq!(pts.len(), grid.len());
    for w in pts.windows(2) {
        assert!(w[1].beta_at > w[0].beta_at);
        assert!(w[1].beta_tech > w[0].beta_tech);
    }
    for p in &pts {
        assert!(p.beta_tech <= p.beta_at);
        assert!(p.t_at() <= p.t_tech());
    }
}

#[test]
fn grid_parsing() {
    let g = parse_grid("0:1:0.25").unwrap();
    assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(parse_grid("0.01:2:0.05").unwrap().len(), 40);
    assert!(parse_grid("1:0:0.1").is_err());
    assert!(parse_grid("0:1").is_err());
    assert!(parse_grid("0:1:0").is_err());
}

#[test]
fn regions_around_the_boundaries() {
    let rule = default_rule();
    let pts = boundary_scan(&[0.5], 1e-10, rule).unwrap();
    let (bt, ba) = (pts[0].beta_tech, pts[0].beta_at);
    let at = |b: f64| region_classify(&ModelParams::new(b, 0.5).unwrap(), rule).unwrap();
    assert_eq!(at(bt - 0.01), Region::TechRegion);
    assert_eq!(at(0.5 * (bt + ba)), Region::AtOnlyRegion);
    assert_eq!(at(ba + 0.01), Region::BeyondAt);
}
