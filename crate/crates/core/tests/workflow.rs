use frozen_planet::io;
use frozen_planet::solve::{
    euler_count, free_fall_seed, frozen_path, FrozenStep, NewtonOptions, PathPoint, StepPolicy,
};

fn short_path() -> Vec<PathPoint<FrozenStep>> {
    let seed = free_fall_seed(24).unwrap();
    frozen_path(&seed, 0.6, &StepPolicy::new(0.2, 0.4), &NewtonOptions::default())
        .unwrap()
        .into_result()
        .unwrap()
        .points
}

#[test]
fn path_export_roundtrip() {
    let points = short_path();
    let mut buf = Vec::new();
    io::write_jsonl(&mut buf, &points).unwrap();
    let back: Vec<PathPoint<FrozenStep>> = io::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back.len(), points.len());
    for (a, b) in back.iter().zip(&points) {
        assert_eq!(a.param.to_bits(), b.param.to_bits());
        assert_eq!(a.cert.cert.z, b.cert.cert.z);
        assert_eq!(a.cert.cert.v.to_bits(), b.cert.cert.v.to_bits());
        assert_eq!(a.cert.spectrum.eigenvalues, b.cert.spectrum.eigenvalues);
    }
    let mut again = Vec::new();
    io::write_jsonl(&mut again, &back).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn runs_are_deterministic() {
    let a = serde_json::to_string(&short_path()).unwrap();
    let b = serde_json::to_string(&short_path()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn summary_table_matches_the_path() {
    let points = short_path();
    let mut buf = Vec::new();
    io::write_csv(
        &mut buf,
        &[("family".into(), "frozen".into())],
        &io::FROZEN_SUMMARY_HEADER,
        io::frozen_summary_rows(&points),
    )
    .unwrap();
    let (header, rows) = io::read_csv(buf.as_slice()).unwrap();
    assert_eq!(header.len(), io::FROZEN_SUMMARY_HEADER.len());
    for (row, p) in rows.iter().zip(&points) {
        assert_eq!(row[0], p.param);
        assert_eq!(row[4], p.cert.cert.v);
    }
    // Every step of the frozen path is a nondegenerate minimum on the symmetric space.
    let reports: Vec<_> = points.iter().map(|p| p.cert.spectrum.clone()).collect();
    assert_eq!(euler_count(&reports).unwrap(), points.len() as i64);
}
