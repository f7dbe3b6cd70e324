//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// Two-sided Student-t p-values from mpmath at 25 significant digits.
pub const P_TABLE: [(usize, f64, f64); 12] = [
    (1, 0.0, 1.0),
    (1, 1.0, 0.5),
    (1, 2.0, 0.2951672353008665483508022),
    (1, 5.0, 0.1256659163780023676274945),
    (8, 0.0, 1.0),
    (8, 1.0, 0.346593507087334247828075),
    (8, 2.0, 0.08051623795726267133728157),
    (8, 5.0, 0.001052825793366539273954715),
    (198, 0.0, 1.0),
    (198, 1.0, 0.3185310379087347968961872),
    (198, 2.0, 0.04686688360148828253270951),
    (198, 5.0, 0.000001259339722121870939337004),
];

/// Closed-form two-sided p for df = 1 (Cauchy) or even df (finite series).
pub fn closed_form_p(t: f64, df: usize) -> f64 {
    if df == 1 {
        return 1.0 - 2.0 / std::f64::consts::PI * t.abs().atan();
    }
    assert!(df % 2 == 0, "closed form needs df = 1 or even df");
    let x = df as f64 / (df as f64 + t * t);
    let (mut c, mut sum, mut xk) = (1.0, 1.0, 1.0);
    for k in 1..df / 2 {
        c *= (2 * k - 1) as f64 / (2 * k) as f64;
        xk *= x;
        sum += c * xk;
    }
    1.0 - (1.0 - x).sqrt() * sum
}

/// Two groups whose pooled-variance t statistic is `t` (up to rounding)
/// with `df >= 2` degrees of freedom: alternating ±1 values, second group
/// shifted.
pub fn groups_with_t(t: f64, df: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(df >= 2, "each group needs two samples");
    let n1 = (df + 2) / 2;
    let n2 = df + 2 - n1;
    let alt = |n: usize| (0..n).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect::<Vec<f64>>();
    let (x, y0) = (alt(n1), alt(n2));
    let ss = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|z| (z - m).powi(2)).sum::<f64>()
    };
    let mx = x.iter().sum::<f64>() / n1 as f64;
    let my = y0.iter().sum::<f64>() / n2 as f64;
    let sp2 = (ss(&x) + ss(&y0)) / df as f64;
    let se = (sp2 * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    // Want (mx - (my + shift)) / se = t.
    let shift = mx - my - t * se;
    (x, y0.iter().map(|z| z + shift).collect())
}

/// Pooled-SD Cohen's d written out directly.
pub fn direct_cohens_d(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let mx = x.iter().sum::<f64>() / nx;
    let my = y.iter().sum::<f64>() / ny;
    let vx = x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / (nx - 1.0);
    let vy = y.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / (ny - 1.0);
    let sp = (((nx - 1.0) * vx + (ny - 1.0) * vy) / (nx + ny - 2.0)).sqrt();
    (mx - my) / sp
}

/// ROC by enumerating thresholds at midpoints between neighbouring distinct
/// scores plus one below and one above all scores. Returns
/// `(eer, accuracy_at_eer, tpr_at_fpr)`.
pub fn brute_force_roc(ins: &[f64], outs: &[f64], fpr_target: f64) -> (f64, f64, f64) {
    let mut all: Vec<f64> = ins.iter().chain(outs).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    let mut taus = vec![f64::NEG_INFINITY];
    taus.extend(all.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    taus.push(f64::INFINITY);
    let rate = |v: &[f64], tau: f64| v.iter().filter(|&&s| s > tau).count() as f64 / v.len() as f64;
    let mut points = vec![(1.0, 1.0)];
    for (k, &tau) in taus.iter().enumerate().skip(1) {
        if k == taus.len() - 1 {
            points.push((0.0, 0.0));
        } else {
            points.push((rate(outs, tau), rate(ins, tau)));
        }
    }

    let mut eer = None;
    let mut prev: Option<(f64, f64)> = None;
    for &(fpr, tpr) in &points {
        let diff = fpr - (1.0 - tpr);
        if diff <= 0.0 {
            eer = Some(match prev {
                Some((pf, pd)) if diff < 0.0 => pf + pd / (pd - diff) * (fpr - pf),
                _ => fpr,
            });
            break;
        }
        prev = Some((fpr, diff));
    }
    let eer = eer.expect("last point has FPR 0 < FNR 1");
    let tpr = points.iter().filter(|p| p.0 <= fpr_target).map(|p| p.1).fold(0.0, f64::max);
    (eer, 1.0 - eer, tpr)
}
