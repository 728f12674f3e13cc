#![allow(dead_code)]

pub fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: got {actual}, expected {expected} (abs tol {tol})"
    );
}

pub fn assert_rel(actual: f64, expected: f64, tol: f64, what: &str) {
    let scale = expected.abs().max(f64::MIN_POSITIVE);
    assert!(
        (actual - expected).abs() <= tol * scale,
        "{what}: got {actual}, expected {expected} (rel tol {tol})"
    );
}

/// Rectangle rule on [0, 2pi); exact for trigonometric polynomials of
/// degree below the panel count.
pub fn circle_quadrature(panels: usize, mut f: impl FnMut(f64) -> num_complex::Complex64) -> num_complex::Complex64 {
    let h = std::f64::consts::TAU / panels as f64;
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    for k in 0..panels {
        acc += f(h * k as f64);
    }
    acc * h
}

/// Trapezoid rule on [0, pi]; exact for cos(kq) up to k = 2*panels - 1.
pub fn box_quadrature(panels: usize, mut f: impl FnMut(f64) -> num_complex::Complex64) -> num_complex::Complex64 {
    let h = std::f64::consts::PI / panels as f64;
    let mut acc = (f(0.0) + f(std::f64::consts::PI)) * 0.5;
    for k in 1..panels {
        acc += f(h * k as f64);
    }
    acc * h
}

/// Tensor trapezoid rule on [0, pi]^2.
pub fn box_quadrature_2d(
    panels: usize,
    mut f: impl FnMut(f64, f64) -> num_complex::Complex64,
) -> num_complex::Complex64 {
    let h = std::f64::consts::PI / panels as f64;
    let weight = |k: usize| if k == 0 || k == panels { 0.5 } else { 1.0 };
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    for i in 0..=panels {
        for j in 0..=panels {
            acc += f(h * i as f64, h * j as f64) * (weight(i) * weight(j));
        }
    }
    acc * h * h
}
