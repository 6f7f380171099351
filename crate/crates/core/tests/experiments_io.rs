use std::fs;

use hawkes_inhibit::classify::GridAxis;
use hawkes_inhibit::experiments::*;
use hawkes_inhibit::model::Params;
use hawkes_inhibit::simulate::SimConfig;

fn b_sweep(replicas: u64, seed: u64) -> SweepSpec {
    let mut s = SweepSpec::new(
        3.0,
        0.0,
        -15.0,
        1.0,
        Coordinate::B,
        vec![0.5, 2.0, 4.0],
        replicas,
        seed,
    );
    s.sim = s.sim.with_horizon(1_000);
    s
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = b_sweep(2_000, 9);
    for name in ["one", "two"] {
        let rows = sweep_explosion(&spec).unwrap();
        write_sweep_csv(
            &rows,
            fs::File::create(dir.path().join(format!("{name}.csv"))).unwrap(),
        )
        .unwrap();
        let out = SweepOutput {
            spec: spec.clone(),
            rows,
        };
        write_json(
            &out,
            fs::File::create(dir.path().join(format!("{name}.json"))).unwrap(),
        )
        .unwrap();
    }
    for ext in ["csv", "json"] {
        let a = fs::read(dir.path().join(format!("one.{ext}"))).unwrap();
        let b = fs::read(dir.path().join(format!("two.{ext}"))).unwrap();
        assert_eq!(a, b);
    }
    let text = fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(!text.contains('\r'));
}

#[test]
fn json_mirror_reloads() {
    let spec = b_sweep(500, 3);
    let out = SweepOutput {
        rows: sweep_explosion(&spec).unwrap(),
        spec,
    };
    let mut buf = Vec::new();
    write_json(&out, &mut buf).unwrap();
    let back: SweepOutput = serde_json::from_slice(&buf).unwrap();
    assert_eq!(back, out);
}

#[test]
fn more_replicas_narrow_intervals() {
    let small = sweep_explosion(&b_sweep(1_000, 5)).unwrap();
    let large = sweep_explosion(&b_sweep(100_000, 5)).unwrap();
    for (s, l) in small.iter().zip(&large) {
        if l.exploded > 0 && l.exploded < l.replicas {
            assert!(
                l.ci.width() < s.ci.width(),
                "{} vs {}",
                l.ci.width(),
                s.ci.width()
            );
        }
    }
}

#[test]
fn ecdf_files_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let spec = b_sweep(1_000, 1);
    for e in tau_cdf_experiment(&spec).unwrap() {
        let path = dir.path().join(format!("ecdf_b{}.csv", e.swept_value));
        write_ecdf_csv(&e.points, fs::File::create(&path).unwrap()).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<(u64, f64)> = r.deserialize().map(|x| x.unwrap()).collect();
        assert_eq!(rows, e.points);
        assert_eq!(rows.last().unwrap().1, 1.0);
    }
}

#[test]
fn gallery_and_grid_writers() {
    let params = Params::three(3.0, 1.1, -15.0, 1.0).unwrap();
    let g = exploding_gallery(&params, &SimConfig::new(3, 2), 2, 10, 1_000_000).unwrap();
    let mut buf = Vec::new();
    write_gallery_csv(&g, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 10);

    let cells = disc_grid(
        &[0.5, 3.0],
        &GridAxis::new(-1.0, 1.0, 1.0).unwrap(),
        &GridAxis::new(-2.0, 2.0, 2.0).unwrap(),
        1.0,
    )
    .unwrap();
    assert_eq!(cells.len(), 18);
    let mut buf = Vec::new();
    write_grid_csv(&cells, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("a,b,c,disc,disc_sign,spectral_radius,linearly_stable,verdict,rule\n"));
    assert_eq!(text.lines().count(), 19);
}
