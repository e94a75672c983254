use dynlab_web::{entropy_counts, gamma_offsets, hyperbolic_times};

#[test]
fn gamma_offsets_stay_inside_the_ball() {
    let off = gamma_offsets("cat2", &[0.3, 0.6], 0.05, 8, 0.002, true).unwrap();
    assert!(!off.is_empty());
    assert_eq!(off.len() % 2, 0);
    assert!(off.chunks(2).all(|v| v[0].hypot(v[1]) <= 0.05));
    assert!(off.chunks(2).any(|v| v == [0.0, 0.0]));
}

#[test]
fn identity_gamma_is_the_whole_seed_disc() {
    let off = gamma_offsets("identity2", &[0.5, 0.5], 0.02, 5, 0.005, false).unwrap();
    let expected = (-4i32..=4)
        .flat_map(|i| (-4i32..=4).map(move |j| (i, j)))
        .filter(|&(i, j)| i * i + j * j <= 16)
        .count();
    assert_eq!(off.len() / 2, expected);
}

#[test]
fn hyperbolic_times_of_a_short_sequence() {
    let l2 = 0.7f64.ln();
    let v = [-1.0, 0.5, -1.0, -1.0];
    let got = hyperbolic_times(&v, 0.5, 0.7).unwrap();
    let brute: Vec<u32> = (0..v.len())
        .filter(|&r| (r..v.len()).all(|h| v[r..=h].iter().sum::<f64>() <= (h - r) as f64 * l2))
        .map(|r| r as u32)
        .collect();
    assert_eq!(got, brute);
    assert!(hyperbolic_times(&[], 0.5, 0.7).is_err());
    assert!(hyperbolic_times(&[-1.0], 0.7, 0.5).is_err());
}

#[test]
fn entropy_counts_are_sandwiched() {
    let c = entropy_counts("rot1", 200, 0.05, 6).unwrap();
    assert_eq!(c.span().len(), 6);
    assert!(c.span().iter().zip(c.sep()).all(|(a, b)| *a <= b));
    assert!(c.rate() < 1e-9);
    assert!(entropy_counts("nope", 10, 0.1, 2).is_err());
}
