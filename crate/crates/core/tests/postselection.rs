use cvqkd_core::gaussian::{qfunction_coefficients, QCoefficients, TwoModeCovariance};
use cvqkd_core::postselection::{
    postselect, radial_integrals, Filter, FilterConfig, QuadratureConfig, Regime,
};

fn scenario() -> TwoModeCovariance {
    TwoModeCovariance::new(5.713130705762508, 1.664396988971154, 2.089860480403857)
}

/// Closed form obtained by integrating Alice's radius analytically: after that step every
/// moment is a Gaussian-times-polynomial integral in `r_b^2`.
fn closed_form(m: &TwoModeCovariance, g: f64, gc: f64) -> (f64, TwoModeCovariance) {
    let d = (m.a + 1.0) * (m.b + 1.0) - m.c * m.c;
    let (ap, bp0, cp) = (2.0 * (m.b + 1.0) / d, 2.0 * (m.a + 1.0) / d, 2.0 * m.c / d);
    let bp = bp0 - cp * cp / ap;
    let h = 1.0 - 1.0 / (g * g);
    let nrm = 4.0 * (ap * bp0 - cp * cp);
    let j0_in = |s: f64| {
        if s.abs() < 1e-12 {
            gc * gc / 2.0
        } else {
            -(-s * gc * gc).exp_m1() / (2.0 * s)
        }
    };
    let j1_in = |s: f64| {
        if s.abs() < 1e-9 {
            gc.powi(4) / 4.0
        } else {
            (1.0 - (-s * gc * gc).exp() * (1.0 + s * gc * gc)) / (2.0 * s * s)
        }
    };
    let j0_out = |s: f64| (-s * gc * gc).exp() / (2.0 * s);
    let j1_out = |s: f64| (-s * gc * gc).exp() * (1.0 + s * gc * gc) / (2.0 * s * s);
    let w = (-h * gc * gc).exp();
    let s_in = bp - h;
    let r = cp * cp / ap;
    let p = nrm / (2.0 * ap) * (w * j0_in(s_in) + j0_out(bp));
    let a = nrm / (ap * ap) * (w * (j0_in(s_in) + r * j1_in(s_in)) + j0_out(bp) + r * j1_out(bp)) / p - 1.0;
    let b = nrm / ap * (w * j1_in(s_in) / (g * g) + j1_out(bp)) / p - 1.0;
    let c = nrm * cp / (ap * ap) * (w * j1_in(s_in) / g + j1_out(bp)) / p;
    (p, TwoModeCovariance::new(a, b, c))
}

#[test]
fn matches_closed_form_oracle() {
    let quad = QuadratureConfig::default();
    let cases = [
        (scenario(), 1.1, 4.257379852667116),
        (scenario(), 1.1, 3.4),
        (scenario(), 1.1, 1.0),
        (scenario(), 1.5, 2.5),
        (scenario(), 2.0, 6.0),
        (TwoModeCovariance::new(3.0, 3.0, 2.8), 1.3, 2.0),
        (TwoModeCovariance::new(20.0, 10.0, 0.0), 1.2, 5.0),
    ];
    for (m, g, gc) in cases {
        let st = postselect(&m, &FilterConfig::absolute(g, gc), &quad).unwrap();
        let (p, cov) = closed_form(&m, g, gc);
        let dp = (st.success_probability - p).abs() / p;
        assert!(dp < 1e-8, "P_s g={g} gc={gc}: {} vs {p}", st.success_probability);
        let d = st.covariance;
        for (x, y) in [(d.a, cov.a), (d.b, cov.b), (d.c, cov.c)] {
            assert!((x - y).abs() <= 1e-7 * y.abs().max(1.0), "g={g} gc={gc}: {x} vs {y}");
        }
    }
}

#[test]
fn frozen_scenario_values() {
    // Generated with the closed-form oracle above.
    let quad = QuadratureConfig::default();
    let st = postselect(&scenario(), &FilterConfig::absolute(1.1, 3.4), &quad).unwrap();
    assert!((st.success_probability - 0.17488281752380577).abs() < 1e-9);
    let expect = TwoModeCovariance::new(6.201462754718913, 1.862324986356537, 2.4676486113394764);
    assert!(st.covariance.max_rel_diff(&expect) < 1e-8);
    assert_eq!(st.regime, Regime::NonGaussian);

    let st = postselect(&scenario(), &FilterConfig::multiple(1.1, 3.0), &quad).unwrap();
    assert!((st.success_probability - 0.055978807).abs() < 1e-8);
    assert_eq!(st.regime, Regime::Gaussian);
    assert!(st.normalization_error < 1e-8);
}

/// Brute-force polar quadrature over all four coordinates, without the Bessel reduction.
fn direct_moments(m: &TwoModeCovariance, g: f64, gc: f64) -> [f64; 8] {
    let q: QCoefficients = qfunction_coefficients(m).unwrap();
    let h = 1.0 - 1.0 / (g * g);
    let nphi = 48;
    let gl = cvqkd_core::quadrature::GaussLegendre::new(24);
    let panels = |lo: f64, hi: f64, n: usize| {
        let mut pts = Vec::new();
        for i in 0..n {
            let (a, b) = (lo + (hi - lo) * i as f64 / n as f64, lo + (hi - lo) * (i + 1) as f64 / n as f64);
            for (x, w) in gl.nodes().iter().zip(gl.weights()) {
                pts.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w));
            }
        }
        pts
    };
    let ra_pts = panels(0.0, 14.0, 8);
    let mut rb_pts = panels(0.0, gc, 4);
    rb_pts.extend(panels(gc, gc + 12.0, 8));
    let trig: Vec<(f64, f64)> = (0..nphi)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / nphi as f64;
            (t.cos(), t.sin())
        })
        .collect();
    let dphi = 2.0 * std::f64::consts::PI / nphi as f64;
    // [P, <Re a>, <Im a>, <Re b>, <Im b>, <Re a^2>, <Re b^2>, <Re a Re b>] in rescaled units
    let mut acc = [0.0; 8];
    for &(ra, wa) in &ra_pts {
        for &(rb, wb) in &rb_pts {
            let (scale, logf) = if rb < gc { (1.0 / g, h * (rb * rb - gc * gc)) } else { (1.0, 0.0) };
            let base = q.norm * ra * rb * wa * wb * dphi * dphi * (-q.a_p * ra * ra - q.b_p * rb * rb + logf).exp();
            for &(ca, sa) in &trig {
                for &(cb, sb) in &trig {
                    // Re(alpha beta) = ra rb cos(pa + pb)
                    let cu = ca * cb - sa * sb;
                    let w = base * (2.0 * q.c_p * ra * rb * cu).exp();
                    let (xa, ya, xb, yb) = (ra * ca, ra * sa, scale * rb * cb, scale * rb * sb);
                    let v = [1.0, xa, ya, xb, yb, xa * xa, xb * xb, xa * xb];
                    for k in 0..8 {
                        acc[k] += w * v[k];
                    }
                }
            }
        }
    }
    acc
}

#[test]
fn bessel_reduction_matches_direct_quadrature() {
    let m = scenario();
    let (g, gc) = (1.1, 3.4);
    let d = direct_moments(&m, g, gc);
    let p = d[0];
    for (k, mean) in d[1..5].iter().enumerate() {
        assert!((mean / p).abs() < 1e-8, "first moment {k} = {}", mean / p);
    }
    let st = postselect(&m, &FilterConfig::absolute(g, gc), &QuadratureConfig::default()).unwrap();
    assert!((st.success_probability - p).abs() < 1e-9);
    // Q-function second moments: <(Re x)^2> = (V + 1) / 4, and the sign of the correlation
    // follows Re(alpha beta) = Re a Re b - Im a Im b.
    let a = 4.0 * d[5] / p - 1.0;
    let b = 4.0 * d[6] / p - 1.0;
    let c = 4.0 * d[7] / p;
    let c_m = st.covariance;
    assert!((a - c_m.a).abs() < 1e-8 * a, "{a} vs {}", c_m.a);
    assert!((b - c_m.b).abs() < 1e-8 * b, "{b} vs {}", c_m.b);
    assert!((c - c_m.c).abs() < 1e-8 * c, "{c} vs {}", c_m.c);
}

#[test]
fn monotone_in_cutoff() {
    let quad = QuadratureConfig::default();
    let mut prev: Option<(f64, TwoModeCovariance)> = None;
    for i in 0..=12 {
        let gc = 1.0 + 0.3 * i as f64;
        let st = postselect(&scenario(), &FilterConfig::absolute(1.1, gc), &quad).unwrap();
        if let Some((p, c)) = prev {
            assert!(st.success_probability <= p + 1e-12);
            assert!(st.covariance.a >= c.a - 1e-10);
            assert!(st.covariance.b >= c.b - 1e-10);
            assert!(st.covariance.c >= c.c - 1e-10);
        }
        prev = Some((st.success_probability, st.covariance));
    }
}

#[test]
fn limits() {
    let m = scenario();
    let quad = QuadratureConfig::default();
    let st = postselect(&m, &FilterConfig::absolute(1.0 + 1e-6, 3.4), &quad).unwrap();
    assert!(st.covariance.max_rel_diff(&m) < 1e-5);
    assert!((st.success_probability - 1.0).abs() < 1e-4);
    let eff = cvqkd_core::nla::effective_covariance(
        &cvqkd_core::nla::effective_parameters(0.8379, 0.1380384264602885, 0.1, 1.1).unwrap(),
    )
    .unwrap();
    let st = postselect(&m, &FilterConfig::multiple(1.1, 4.0), &quad).unwrap();
    assert!(st.covariance.max_rel_diff(&eff) < 1e-3, "{:?} vs {eff:?}", st.covariance);
}

#[test]
fn quadrature_runs_at_unit_gain() {
    let m = scenario();
    let q = qfunction_coefficients(&m).unwrap();
    let f = Filter {
        gain: 1.0,
        cutoff: 2.0,
        v_b: m.b,
    };
    let r = radial_integrals(&q, &f, &QuadratureConfig::default()).unwrap();
    assert!(r.covariance().max_rel_diff(&m) < 1e-8);
    assert!(r.tail_bound < 1e-40);
}
