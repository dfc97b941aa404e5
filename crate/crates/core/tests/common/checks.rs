//! Every estimator on the shared fixtures, paired with its oracle value.

use calatt::el_solver::{maximize_ell, maximize_kappa, nu_lik_hat, nu_lik_tilde, KappaFit, OmegaState};
use calatt::estimators::{
    build_tilde_h, evaluate_cell, hir_weights, nu0_aipw, nu0_ipw, nu1_aipw_sp, nu1_np, nu_reg, AipwFlavor, CellSpec,
    ControlVariates, HBlock,
};
use calatt::models::{AugVariant, AugmentedPsFit, OutcomeFit, RegressorSpec};
use calatt::numkernel::{ColumnKind, ColumnLabel, DesignMatrix};
use calatt::{Dataset, EstimatorKind};

use super::*;

pub struct Check {
    pub name: String,
    pub got: f64,
    pub want: f64,
}

impl Check {
    pub fn passes(&self, tol: f64) -> bool {
        self.got.is_finite() && close(self.got, self.want, tol)
    }
}

fn push<E>(out: &mut Vec<Check>, name: &str, got: Result<f64, E>, want: f64) {
    out.push(Check {
        name: name.into(),
        got: got.unwrap_or(f64::NAN),
        want,
    });
}

fn outcome(m: &[f64], group: u8) -> OutcomeFit {
    OutcomeFit {
        group,
        spec: RegressorSpec::intercept_only(),
        coefficients: Vec::new(),
        m_hat: m.to_vec(),
        dropped_columns: Vec::new(),
    }
}

/// Augmented fit with fixed `pi~` and an intercept-only base model.
pub fn fixed_aug(pi: &[f64]) -> AugmentedPsFit {
    let n = pi.len();
    let f = DesignMatrix::from_columns(vec![(ColumnLabel::new("1", ColumnKind::Constant), vec![1.0; n])]).unwrap();
    AugmentedPsFit {
        variant: AugVariant::Offset,
        design: f.clone(),
        f,
        offset: None,
        coefficients: vec![0.0],
        retained: vec![0],
        delta: Vec::new(),
        tilde_pi: pi.to_vec(),
        collapsed_to_base: false,
        iterations: 0,
        augmentation_residuals: [0.0; 2],
        calibration_targets: None,
        rho: None,
    }
}

fn four_row_checks(out: &mut Vec<Check>) {
    let fx = four();
    let (t, y) = (fx.data.t(), fx.data.y());
    push(out, "four: nu1 NP", nu1_np(&fx.data), 1.5);
    push(out, "four: nu0 IPW (hand)", nu0_ipw(&fx.pi, &fx.data, false), 2.375);
    push(out, "four: nu0 IPW.ratio (hand)", nu0_ipw(&fx.pi, &fx.data, true), 3.8);
    push(out, "four: nu0 IPW.ratio", nu0_ipw(&fx.pi, &fx.data, true), ipw0(&fx.pi, t, y, true));
    push(out, "four: nu0 AIPW (hand)", nu0_aipw(&fx.pi, &fx.m0, &fx.data, AipwFlavor::Np), 1.5625);
    push(
        out,
        "four: nu0 AIPW",
        nu0_aipw(&fx.pi, &fx.m0, &fx.data, AipwFlavor::Np),
        aipw0(&fx.pi, &fx.m0, t, y),
    );
    let pm0: Vec<f64> = fx.pi.iter().zip(&fx.m0).map(|(p, m)| p * m).collect();
    push(out, "four: nu0 SP (hand)", nu0_aipw(&fx.pi, &fx.m0, &fx.data, AipwFlavor::Sp), 2.2875);
    push(
        out,
        "four: nu0 SP",
        nu0_aipw(&fx.pi, &fx.m0, &fx.data, AipwFlavor::Sp),
        aipw0(&fx.pi, &pm0, t, y),
    );
    push(out, "four: nu1 SP (hand)", nu1_aipw_sp(&fx.pi, &fx.m1, &fx.data), 1.87);
    push(out, "four: nu1 SP", nu1_aipw_sp(&fx.pi, &fx.m1, &fx.data), sp1(&fx.pi, &fx.m1, t, y));

    // Likelihood means at a fixed (pi~, h~, lambda).
    let pi = fx.pi;
    let cols = vec![
        pi.iter().map(|p| p * (1.0 - p)).collect::<Vec<f64>>(),
        pi.iter().map(|p| p * p).collect(),
    ];
    let lambda = [0.1, -0.2];
    let omega: Vec<f64> = (0..4).map(|i| pi[i] + lambda[0] * cols[0][i] + lambda[1] * cols[1][i]).collect();
    let state = OmegaState {
        lambda: lambda.to_vec(),
        omega: omega.clone(),
        feasible: true,
        iterations: 0,
        gradient_norm: 0.0,
        warnings: Vec::new(),
    };
    let (o0, o1) = lik_ratio_oracle(&pi, &omega, t, y);
    let hat = nu_lik_hat(&state, &pi, &fx.data);
    push(out, "four: nu0 lik (fixed lambda)", hat.as_ref().map(|v| v.0), o0);
    push(out, "four: nu1 lik (fixed lambda)", hat.map(|v| v.1), o1);
    // Hand value of the treated mean: weights 0.5/0.475 and 0.8/0.688.
    let (a, b) = (0.5 / 0.475, 0.8 / 0.688);
    push(out, "four: nu1 lik (hand)", nu_lik_hat(&state, &pi, &fx.data).map(|v| v.1), (a + 2.0 * b) / (a + b));

    // Second-stage means at fixed refitted weights.
    let k1 = KappaFit {
        t: 1,
        lambda: lambda.to_vec(),
        block: vec![0],
        omega_t: vec![0.45, 0.7, 0.0, 0.0],
        iterations: 0,
        residual: 0.0,
    };
    let k0 = KappaFit {
        t: 0,
        lambda: lambda.to_vec(),
        block: vec![1],
        omega_t: vec![0.0, 0.0, 0.9, 0.6],
        iterations: 0,
        residual: 0.0,
    };
    let tilde = nu_lik_tilde(&state, [&k0, &k1], &pi, &fx.data);
    let w1 = [0.5 / 0.45, 0.8 / 0.7];
    let w0 = [0.2 / 0.9, 0.5 / 0.6];
    push(
        out,
        "four: nu1 lik refit",
        tilde.as_ref().map(|e| e.nu1),
        (w1[0] + 2.0 * w1[1]) / (w1[0] + w1[1]),
    );
    push(out, "four: nu0 lik refit", tilde.map(|e| e.nu0), (3.0 * w0[0] + 4.0 * w0[1]) / (w0[0] + w0[1]));
}

fn five_row_cell_checks(out: &mut Vec<Check>) {
    let d = five();
    let (t, y) = (d.t(), d.y());
    let x = d.covariate("x").unwrap().to_vec();
    let b = d.covariate("b").unwrap().to_vec();
    let ones = vec![1.0; 5];
    let c1 = ols_arm(&[ones.clone(), x.clone()], y, t, 1.0);
    let c0 = ols_arm(&[ones, x.clone()], y, t, 0.0);
    let m1: Vec<f64> = x.iter().map(|v| c1[0] + c1[1] * v).collect();
    let m0: Vec<f64> = x.iter().map(|v| c0[0] + c0[1] * v).collect();
    // Saturated logistic fit on a binary covariate: the treated share within each level.
    let pi: Vec<f64> = b.iter().map(|v| if *v == 0.0 { 0.5 } else { 1.0 / 3.0 }).collect();
    let nu1 = treated_mean(t, y);
    let pm0: Vec<f64> = pi.iter().zip(&m0).map(|(p, m)| p * m).collect();

    let cell = CellSpec::new(RegressorSpec::linear(&["b"]), RegressorSpec::linear(&["x"]));
    let kinds = [
        EstimatorKind::Or,
        EstimatorKind::Ipw,
        EstimatorKind::IpwRatio,
        EstimatorKind::Aipw,
        EstimatorKind::AipwSp,
        EstimatorKind::Hir,
        EstimatorKind::AipwHir,
    ];
    let wants = [
        treated_mean(t, &m1) - treated_mean(t, &m0),
        nu1 - ipw0(&pi, t, y, false),
        nu1 - ipw0(&pi, t, y, true),
        nu1 - aipw0(&pi, &m0, t, y),
        sp1(&pi, &m1, t, y) - aipw0(&pi, &pm0, t, y),
        // Balancing on (1, b) reweights each level to its treated count: r = 1 and 1/2.
        nu1 - (1.0 * 1.0 + 0.5 * 3.0 + 0.5 * 2.0) / 2.0,
        nu1 - aipw0(&pi, &m0, t, y),
    ];
    for ((k, res), want) in evaluate_cell(&d, &cell, &kinds).into_iter().zip(wants) {
        out.push(Check {
            name: format!("five: {k}"),
            got: res.map(|o| o.att).unwrap_or(f64::NAN),
            want,
        });
    }
    push(out, "five: OR (hand)", evaluate_one(&d, &cell, EstimatorKind::Or), 20.0 / 7.0);
    push(out, "five: HIR (hand)", evaluate_one(&d, &cell, EstimatorKind::Hir), 3.25);
    let hw = hir_weights(&d, &RegressorSpec::linear(&["b"]));
    for (i, want) in [(2, 1.0), (3, 0.5), (4, 0.5)] {
        push(
            out,
            &format!("five: balancing weight row {i}"),
            hw.as_ref().map(|h| h.r[i]),
            want,
        );
    }
}

fn evaluate_one(d: &Dataset, cell: &CellSpec, k: EstimatorKind) -> calatt::Result<f64> {
    evaluate_cell(d, cell, &[k])
        .pop()
        .unwrap()
        .1
        .map(|o| o.att)
        .map_err(calatt::Error::Infeasible)
}

fn five_row_reg_checks(out: &mut Vec<Check>) {
    // Two control variates per arm on five rows with fixed pi~ and m_hat.
    let d = Dataset::new(vec![4.0, 6.0, 5.0, 1.0, 3.0], vec![1.0, 1.0, 1.0, 0.0, 0.0], vec![]).unwrap();
    let (t, y) = (d.t(), d.y());
    let pi = FIVE_PI;
    let aug = fixed_aug(&pi);
    let (th, _) = build_tilde_h(&aug, &outcome(&FIVE_M0, 0), &outcome(&FIVE_M1, 1), &d, false, None).unwrap();
    let hand = tilde_h_columns(&pi, &FIVE_M0, &FIVE_M1, false);
    for (j, (got, want)) in th.columns.iter().zip(&hand).enumerate() {
        for i in 0..5 {
            out.push(Check {
                name: format!("five: h~ column {j} row {i}"),
                got: got[i],
                want: want[i],
            });
        }
    }
    let two = vec![hand[0].clone(), hand[2].clone()];
    let n = 5;
    let xi: Vec<Vec<f64>> = two
        .iter()
        .map(|h| (0..n).map(|i| (t[i] - pi[i]) * h[i] / (pi[i] * (1.0 - pi[i]))).collect())
        .collect();
    let zeta = |arm: f64| -> Vec<Vec<f64>> {
        two.iter()
            .map(|h| {
                (0..n)
                    .map(|i| {
                        let r = if arm == 1.0 { t[i] } else { 1.0 - t[i] };
                        r * h[i] / (pi[i] * (1.0 - pi[i]))
                    })
                    .collect()
            })
            .collect()
    };
    let cv = ControlVariates {
        eta0: (0..n).map(|i| (1.0 - t[i]) * pi[i] * y[i] / (1.0 - pi[i])).collect(),
        eta1: (0..n).map(|i| t[i] * y[i]).collect(),
        xi,
        zeta0: zeta(0.0),
        zeta1: zeta(1.0),
        pi: pi.to_vec(),
        t: t.to_vec(),
        m0: FIVE_M0.to_vec(),
        m1: FIVE_M1.to_vec(),
    };
    push(out, "five: nu1 reg", nu_reg(&cv, 1).map(|r| r.nu), reg_oracle(&pi, &two, t, y, 1));
    push(out, "five: nu0 reg", nu_reg(&cv, 0).map(|r| r.nu), reg_oracle(&pi, &two, t, y, 0));
}

/// Ten rows: enough treated and untreated rows for the full `h~` of both variants.
pub fn ten() -> (Dataset, Vec<f64>, Vec<f64>, Vec<f64>) {
    let y = vec![4.0, 6.0, 5.0, 7.5, 3.5, 1.0, 3.0, 2.0, 2.5, 0.5];
    let t = vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let pi = vec![0.62, 0.55, 0.48, 0.71, 0.39, 0.31, 0.44, 0.27, 0.52, 0.35];
    let m0 = vec![2.1, 3.4, 2.9, 3.8, 1.7, 1.2, 2.6, 1.9, 2.2, 0.9];
    let m1 = vec![4.3, 5.2, 4.4, 6.9, 3.9, 2.8, 4.1, 3.5, 3.3, 2.6];
    (Dataset::new(y, t, vec![]).unwrap(), pi, m0, m1)
}

fn ten_row_reg_checks(out: &mut Vec<Check>) {
    let (d, pi, m0, m1) = ten();
    let aug = fixed_aug(&pi);
    for (extra, label) in [(false, "h~_1"), (true, "h~_1 + h~_2")] {
        let (_, cv) = build_tilde_h(&aug, &outcome(&m0, 0), &outcome(&m1, 1), &d, extra, None).unwrap();
        let cols = tilde_h_columns(&pi, &m0, &m1, extra);
        for arm in [0u8, 1] {
            push(
                out,
                &format!("ten: nu{arm} reg, {label}"),
                nu_reg(&cv, arm).map(|r| r.nu),
                reg_oracle(&pi, &cols, d.t(), d.y(), arm),
            );
        }
    }
}

fn likelihood_solver_checks(out: &mut Vec<Check>) {
    let (d, pi, _, _) = ten();
    let t = d.t();
    let cols = vec![
        pi.iter().map(|p| p * (1.0 - p)).collect::<Vec<f64>>(),
        pi.iter().map(|p| p * p).collect(),
    ];
    let th = tilde_h_from(cols.clone(), vec![HBlock::Treated, HBlock::Untreated]);
    let state = maximize_ell(&pi, &th, t);
    let oracle = ell_oracle(&pi, &cols, t);
    for j in 0..2 {
        push(
            out,
            &format!("ten: lambda_hat[{j}]"),
            state.as_ref().map(|s| s.lambda[j]),
            oracle[j],
        );
    }
    let Ok(state) = state else { return };
    let omega: Vec<f64> = (0..10).map(|i| pi[i] + oracle[0] * cols[0][i] + oracle[1] * cols[1][i]).collect();
    let (o0, o1) = lik_ratio_oracle(&pi, &omega, t, d.y());
    let hat = nu_lik_hat(&state, &pi, &d);
    push(out, "ten: nu0 lik hat", hat.as_ref().map(|v| v.0), o0);
    push(out, "ten: nu1 lik hat", hat.map(|v| v.1), o1);

    // One-dimensional second stages: the stationarity equation is monotone in the
    // free coefficient, so bisection finds it independently of the Newton solver.
    let n = 10;
    let base1: Vec<f64> = (0..n).map(|i| pi[i] + state.lambda[1] * cols[1][i]).collect();
    let g1 = |l: f64| -> f64 {
        (0..n)
            .map(|i| (t[i] / (base1[i] + l * cols[0][i]) - 1.0) * pi[i])
            .sum()
    };
    let lo1 = (0..n)
        .filter(|&i| t[i] == 1.0)
        .map(|i| -base1[i] / cols[0][i])
        .fold(f64::NEG_INFINITY, f64::max);
    let lam1 = bisect(g1, lo1 + 1e-9, lo1 + 1e3);
    let base0: Vec<f64> = (0..n).map(|i| pi[i] + state.lambda[0] * cols[0][i]).collect();
    let g0 = |l: f64| -> f64 {
        (0..n)
            .map(|i| ((1.0 - t[i]) / (1.0 - base0[i] - l * cols[1][i]) - 1.0) * pi[i])
            .sum()
    };
    let hi0 = (0..n)
        .filter(|&i| t[i] == 0.0)
        .map(|i| (1.0 - base0[i]) / cols[1][i])
        .fold(f64::INFINITY, f64::min);
    let lam0 = bisect(g0, hi0 - 1e3, hi0 - 1e-9);
    let k1 = maximize_kappa(&state, &th, &pi, t, 1);
    let k0 = maximize_kappa(&state, &th, &pi, t, 0);
    push(out, "ten: lambda~ treated", k1.as_ref().map(|k| k.lambda[0]), lam1);
    push(out, "ten: lambda~ untreated", k0.as_ref().map(|k| k.lambda[1]), lam0);
    if let (Ok(k0), Ok(k1)) = (k0, k1) {
        let w1: Vec<f64> = (0..n).map(|i| base1[i] + lam1 * cols[0][i]).collect();
        let w0: Vec<f64> = (0..n).map(|i| base0[i] + lam0 * cols[1][i]).collect();
        let (_, r1) = lik_ratio_oracle(&pi, &w1, t, d.y());
        let (r0, _) = lik_ratio_oracle(&pi, &w0, t, d.y());
        let e = nu_lik_tilde(&state, [&k0, &k1], &pi, &d);
        push(out, "ten: nu1 lik", e.as_ref().map(|e| e.nu1), r1);
        push(out, "ten: nu0 lik", e.map(|e| e.nu0), r0);
    }
}

/// All fixture checks.
pub fn fixture_checks() -> Vec<Check> {
    let mut out = Vec::new();
    four_row_checks(&mut out);
    five_row_cell_checks(&mut out);
    five_row_reg_checks(&mut out);
    ten_row_reg_checks(&mut out);
    likelihood_solver_checks(&mut out);
    out
}
