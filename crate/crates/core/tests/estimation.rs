//! Parameter recovery with the true memberships.

use graphseq_core::estimate::{
    fit_mle_general, fit_type1, fit_type1_with, fit_type2, loglik_general, SearchOpts, Type1Method, Type1Opts,
};
use graphseq_core::generator::{gen_sequence, GenConfig, Generated};
use graphseq_core::{BlockMatrix, DynamicsParams, ModelTag};

const RUNS: u64 = 10;

fn w() -> BlockMatrix {
    BlockMatrix::planted(2, 0.3, 0.2).unwrap()
}

fn mu() -> BlockMatrix {
    BlockMatrix::planted(2, 0.6, 0.4).unwrap()
}

fn type1_runs() -> impl Iterator<Item = Generated> {
    (0..RUNS).map(|s| {
        let d = DynamicsParams::type1(w(), mu()).unwrap();
        gen_sequence(&GenConfig::fixed(500, 20, d, 300 + s)).unwrap()
    })
}

fn type2_runs(xi: f64, base: u64) -> impl Iterator<Item = Generated> {
    (0..RUNS).map(move |s| {
        let d = DynamicsParams::type2(w(), xi).unwrap();
        gen_sequence(&GenConfig::fixed(500, 20, d, base + s)).unwrap()
    })
}

#[test]
fn type1_moments_and_mle_recover_parameters() {
    let opts = Type1Opts { grid_step: 0.01, method: Type1Method::Joint };
    let (mut jw, mut jmu, mut mw, mut mmu, mut pw, mut agree) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
    for gen in type1_runs() {
        let g = gen.truth.at(0);
        let (wj, muj) = fit_type1_with(&gen.seq, g, &opts).unwrap();
        let DynamicsParams::TypeI { w: wm, mu: mum } = fit_mle_general(&gen.seq, g, ModelTag::TypeI, &SearchOpts::default()).unwrap()
        else {
            panic!("wrong model")
        };
        let (wp, _) = fit_type1(&gen.seq, g, 0.01).unwrap();
        let n = RUNS as f64;
        jw += wj.max_abs_diff(&w()) / n;
        jmu += muj.max_abs_diff(&mu()) / n;
        mw += wm.max_abs_diff(&w()) / n;
        mmu += mum.max_abs_diff(&mu()) / n;
        pw += wp.max_abs_diff(&w()) / n;
        agree = agree.max(wj.max_abs_diff(&wm));
    }
    assert!(jw <= 0.05 && jmu <= 0.15, "joint moments: W {jw}, mu {jmu}");
    assert!(mw <= 0.05 && mmu <= 0.15, "likelihood: W {mw}, mu {mmu}");
    assert!(pw <= 0.05, "per-snapshot moments: W {pw}");
    assert!(agree <= 0.01, "moments and likelihood disagree on W by {agree}");
}

#[test]
fn type2_xi_is_recovered_by_both_fits() {
    for (xi, base) in [(0.5, 500), (0.2, 600), (0.8, 700)] {
        let (mut err, mut gap) = (0.0, 0.0f64);
        for gen in type2_runs(xi, base) {
            let g = gen.truth.at(0);
            let (_, moment) = fit_type2(&gen.seq, g, 0.01).unwrap();
            let DynamicsParams::TypeII { xi: mle, .. } = fit_mle_general(&gen.seq, g, ModelTag::TypeII, &SearchOpts::default()).unwrap()
            else {
                panic!("wrong model")
            };
            err += (moment - xi).abs() / RUNS as f64;
            gap = gap.max((moment - mle).abs());
        }
        assert!(err <= 0.05, "xi={xi}: mean error {err}");
        assert!(gap <= 0.02, "xi={xi}: fits differ by {gap}");
    }
}

#[test]
fn independent_snapshots_give_small_xi() {
    for gen in type2_runs(0.0, 800) {
        let (_, xi) = fit_type2(&gen.seq, gen.truth.at(0), 0.01).unwrap();
        assert!(xi <= 0.1, "xi_hat={xi}");
    }
}

#[test]
fn perturbing_parameters_lowers_likelihood() {
    let gen = type1_runs().next().unwrap();
    let g = gen.truth.at(0);
    let truth = loglik_general(&gen.seq, g, &DynamicsParams::type1(w(), mu()).unwrap()).unwrap();
    for (dw, dmu) in [(0.05, 0.0), (-0.05, 0.0), (0.0, 0.1), (0.0, -0.1), (0.03, -0.05)] {
        let p = DynamicsParams::type1(w().map(|x| x + dw).unwrap(), mu().map(|x| x + dmu).unwrap()).unwrap();
        let ll = loglik_general(&gen.seq, g, &p).unwrap();
        assert!(ll < truth, "({dw},{dmu}): {ll} >= {truth}");
    }
    let xi_gen = type2_runs(0.5, 900).next().unwrap();
    let at = |xi| loglik_general(&xi_gen.seq, xi_gen.truth.at(0), &DynamicsParams::type2(w(), xi).unwrap()).unwrap();
    assert!(at(0.4) < at(0.5) && at(0.6) < at(0.5));
}
