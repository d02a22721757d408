//! Acceptance suite. Runs when LAPKIT_ACCEPTANCE=1 is set or criterion
//! numbers are passed as arguments:
//!
//! ```text
//! LAPKIT_ACCEPTANCE=1 cargo test --release -p lapkit-core --test acceptance
//! cargo test --release -p lapkit-core --test acceptance -- 1 7 8
//! ```

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lapkit_core::bands::{diagonalize_fiber, riesz_projection, transport_frame, BandBlock, Contour};
use lapkit_core::green::{
    coarea_reconstruct, eta_identity_check, exp_holder_sides, extrapolate_to_axis, BumpFunction, CoareaOptions, EpsSchedule, GreenOptions,
    TrigPoly, Window,
};
use lapkit_core::lap::{
    bounded_ratio, convolution_growth, decomposition_check, decomposition::random_test_vector, epsilon_scan, fit_decay, hoelder_scan,
    ray_samples, DecayLaw, DecompositionOptions, GreenCache, LapOptions,
};
use lapkit_core::oscillatory::{eval_i1_decay, eval_i_total, morse_residual, CubicPhase, OscOptions, PhaseProblem};
use lapkit_core::torus::torus_delta;
use lapkit_core::weyl::{ball_samples, directions26, find_weyl_points, solve_s, sphere_phase_check, LocalTwoBand, WeylChart};
use lapkit_core::{reference, CMat, Result, C64};

type Outcome = (bool, Vec<String>);

fn line(ok: bool, s: String) -> (bool, String) {
    (ok, format!("{} {s}", if ok { "ok  " } else { "FAIL" }))
}

fn collect(items: Vec<(bool, String)>) -> Outcome {
    (items.iter().all(|i| i.0), items.into_iter().map(|i| i.1).collect())
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    line(e <= limit, format!("runtime {:.1} s (limit {} s)", e.as_secs_f64(), limit.as_secs()))
}

fn c1_watson() -> Result<Outcome> {
    let t = Instant::now();
    let m = reference::laplacian(3);
    let lim = extrapolate_to_axis(&m, &[0, 0, 0], &[0, 0, 0], 6.0, &Window::Torus, &EpsSchedule::default(), &GreenOptions::default())?;
    let want = common::watson_green();
    let rel = (lim.value[0] - want).norm() / want.abs();
    Ok(collect(vec![
        line(rel <= 1e-4, format!("G(0; 6+i0) = {:.10} oracle {want:.10} rel {rel:.2e}", lim.value[0])),
        within(t, Duration::from_secs(60)),
    ]))
}

fn js(lo: i64, hi: i64) -> Vec<i64> {
    (lo..=hi).collect()
}

/// ε = 1e-3 · 2^{-j}, j < 14.
fn ray_schedule() -> EpsSchedule {
    EpsSchedule { eps0: 1e-3, ratio: 0.5, count: 14 }
}

fn c2_definite_decay() -> Result<Outcome> {
    let t = Instant::now();
    let m = reference::laplacian(3);
    let f = fit_decay(&m, 6.0, &[1, 0, 0], &js(4, 40), &Window::Torus, DecayLaw::PurePower, &ray_schedule(), &GreenOptions::default())?;
    let far = f.samples.last().unwrap();
    Ok(collect(vec![
        line((f.p_hat - 1.0).abs() <= 0.15, format!("p̂ = {:.4} residual {:.2e}, |G|<n> at n=40: {:.5} (1/4π = {:.5})", f.p_hat, f.residual, far.1 * far.0, 0.25 / PI)),
        within(t, Duration::from_secs(600)),
    ]))
}

fn c3_indefinite_decay() -> Result<Outcome> {
    let m = reference::laplacian(3);
    let s = ray_samples(&m, 2.0, &[1, 0, 0], &js(4, 40), &Window::Torus, &ray_schedule(), &GreenOptions::default())?;
    let r = bounded_ratio(&s, 0.5, 0.0);
    Ok(collect(vec![line(r <= 10.0, format!("sup/median of |G|<n>^(1/2) at E = 2: {r:.3}"))]))
}

fn c4_weyl_decay() -> Result<Outcome> {
    let window = Window::Bump(BumpFunction::new(&[0.0; 3], 0.0, 1.5)?);
    let sched = EpsSchedule { eps0: 1e-2, ratio: 0.5, count: 6 };
    let mut items = Vec::new();
    for tilt in [0.0, 0.5] {
        let m = reference::weyl_toy(tilt);
        let s = ray_samples(&m, 0.0, &[1, 1, 1], &js(4, 32), &window, &sched, &GreenOptions::default())?;
        let r = bounded_ratio(&s, 1.0, 1.0);
        items.push(line(r <= 10.0, format!("tilt {tilt}: sup/median of |G|<n>/log<n> = {r:.3}")));
    }
    Ok(collect(items))
}

fn c5_lap() -> Result<Outcome> {
    let m = reference::laplacian(3);
    let cache = GreenCache::new(&m, 10, &Window::Torus, &LapOptions::default())?;
    let scan_eps = EpsSchedule { eps0: 1e-1, ratio: 0.1, count: 4 };
    let holder_eps = EpsSchedule { eps0: 1e-2, ratio: 0.5, count: 5 };
    let mut items = Vec::new();
    for (e0, beta_min) in [(1.0, 0.5), (6.0, 0.35)] {
        let s = epsilon_scan(&cache, 1.6, e0, &scan_eps)?;
        let d: Vec<String> = s.diffs.iter().map(|x| format!("{x:.3e}")).collect();
        items.push(line(s.monotone, format!("E = {e0}: ε-scan differences [{}], limit norm {:.4}", d.join(", "), s.limit_norm)));
        let grid: Vec<f64> = [-0.1, -0.05, 0.0, 0.05, 0.1].iter().map(|x| e0 + x).collect();
        let h = hoelder_scan(&cache, 1.6, &grid, &holder_eps)?;
        let used = h.pairs.iter().filter(|p| !p.excluded).count();
        items.push(line(
            h.beta_hat >= beta_min,
            format!("E = {e0}: β̂ = {:.3} (need ≥ {beta_min}) from {used} pairs, fit residual {:.2e}", h.beta_hat, h.fit_residual),
        ));
    }
    Ok(collect(items))
}

fn c6_coarea() -> Result<Outcome> {
    let one: TrigPoly = vec![(vec![0, 0, 0], C64::new(1.0, 0.0))];
    let mixed: TrigPoly = vec![(vec![1, 0, 0], C64::new(0.6, 0.2)), (vec![0, -1, 1], C64::new(-0.3, 0.5))];
    let one2: TrigPoly = vec![(vec![0, 0], C64::new(1.0, 0.0))];
    let mixed2: TrigPoly = vec![(vec![1, 0], C64::new(1.0, 0.0)), (vec![0, 2], C64::new(0.0, 0.4))];
    let h = PI / 2.0;
    let cases: Vec<(&str, _, TrigPoly, TrigPoly, Window, C64)> = vec![
        ("laplacian3d 1·1", reference::laplacian(3), one.clone(), one.clone(), Window::Bump(BumpFunction::new(&[h, h, h], 0.4, 1.2)?), C64::new(0.0, 1.0)),
        ("laplacian3d mixed", reference::laplacian(3), mixed.clone(), one.clone(), Window::Bump(BumpFunction::new(&[h, h, 0.0], 0.3, 1.0)?), C64::new(0.5, 1.0)),
        ("laplacian2d 1·1", reference::laplacian(2), one2.clone(), one2.clone(), Window::Bump(BumpFunction::new(&[h, h], 0.4, 1.2)?), C64::new(0.0, 1.0)),
        ("laplacian2d mixed", reference::laplacian(2), mixed2.clone(), mixed2, Window::Bump(BumpFunction::new(&[h, -h], 0.3, 1.1)?), C64::new(-0.4, 1.0)),
        ("weyl_tilt_0.5 mixed", reference::weyl_toy(0.5), mixed, one, Window::Bump(BumpFunction::new(&[0.8, 0.6, 1.0], 0.2, 0.5)?), C64::new(0.3, 1.0)),
    ];
    let mut items = Vec::new();
    for (name, m, phi, psi, w, z) in cases {
        items.push(match coarea_reconstruct(&m, &phi, &psi, &w, z, &CoareaOptions::default(), &GreenOptions::default()) {
            Ok(r) => line(r.rel_defect <= 1e-3, format!("{name}: coarea {:.8} direct {:.8} rel {:.2e}", r.coarea, r.direct, r.rel_defect)),
            Err(e) => line(false, format!("{name}: {e}")),
        });
    }
    Ok(collect(items))
}

fn c7_oscillatory() -> Result<Outcome> {
    let o = OscOptions::default();
    let ts = [4.0, 8.0, 16.0, 32.0, 64.0];
    let e1 = [1.0, 0.0, 0.0];
    let mut items = Vec::new();
    let cases = [("definite, z = 0.05", CubicPhase::definite(3), 0.05), ("definite, z = 0", CubicPhase::definite(3), 0.0), ("indefinite, z = 0", CubicPhase::indefinite(3), 0.0)];
    for (name, ph, z) in cases {
        let p = PhaseProblem::new(Arc::new(ph), &[0.0; 3], 0.2, 0.45)?;
        let m: Vec<f64> = ts.iter().map(|&t| eval_i_total(&p, C64::new(z, 0.0), t, &e1, &o).map(|(v, _)| v.norm() * t.powf(1.5))).collect::<Result<_>>()?;
        let r = m.iter().cloned().fold(0.0, f64::max) / m.iter().cloned().fold(f64::INFINITY, f64::min);
        items.push(line(r <= 10.0, format!("{name}: max/min of |I| t^(3/2) = {r:.3}")));
    }
    let p = PhaseProblem::new(Arc::new(CubicPhase::definite(3)), &[0.0; 3], 0.2, 0.45)?;
    let d = eval_i1_decay(&p, C64::new(0.05, 0.0), &ts, 2, &e1, &o)?;
    let slope = d.slope.unwrap_or(f64::NEG_INFINITY);
    items.push(line(slope <= -1.7, format!("I₁ log-slope {slope:.3}")));
    let cubic = PhaseProblem::new(Arc::new(CubicPhase::definite(3).with_cubic(vec![0.1, 0.0, 0.0])), &[0.0; 3], 0.2, 0.4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ys: Vec<Vec<f64>> = (0..200)
        .map(|_| loop {
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-0.4..0.4)).collect();
            if y.iter().map(|v| v * v).sum::<f64>() < 0.16 {
                break y;
            }
        })
        .collect();
    let mut worst: f64 = 0.0;
    for mu in [0.0, 0.05, 0.1, 0.15] {
        worst = worst.max(morse_residual(&cubic, mu, &e1, &ys)?);
    }
    items.push(line(worst <= 1e-9, format!("morse residual {worst:.2e}")));
    Ok(collect(items))
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn random_k(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..3).map(|_| rng.random_range(-PI..PI)).collect()
}

fn c8_hypotheses() -> Result<Outcome> {
    let t = Instant::now();
    let mut items = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let toys: Vec<_> = [0.0, 0.5, 1.5].iter().map(|&t| reference::weyl_toy(t)).collect();

    let mut proj: f64 = 0.0;
    for m in &toys {
        for _ in 0..50 {
            let k = random_k(&mut rng);
            let spec = diagonalize_fiber(m, &k)?;
            let radius = 0.5 * spec.min_gap;
            let mut sum = CMat::zeros(2, 2);
            for &ev in &spec.eigenvalues {
                let p = riesz_projection(m, &k, Contour { center: C64::new(ev, 0.0), radius })?.projector;
                proj = proj.max(max_abs(&(&p * &p - &p)));
                sum += p;
            }
            proj = proj.max(max_abs(&(sum - CMat::identity(2, 2))));
        }
    }
    items.push(line(proj <= 1e-9, format!("projectors: max |P² - P|, |ΣP - I| = {proj:.2e}")));

    let mut frame: f64 = 0.0;
    for m in &toys {
        let a = random_k(&mut rng);
        let path: Vec<Vec<f64>> = (0..40).map(|i| a.iter().map(|x| x + 0.02 * i as f64).collect()).collect();
        for l in 0..2 {
            let f = transport_frame(m, &path, BandBlock::single(l))?;
            for (k, phi) in path.iter().zip(&f.frames) {
                let p = diagonalize_fiber(m, k)?.block_projector(BandBlock::single(l));
                frame = frame.max(max_abs(&(phi.adjoint() * phi - CMat::identity(1, 1)))).max(max_abs(&(phi * phi.adjoint() - p)));
            }
        }
    }
    items.push(line(frame <= 1e-9, format!("frames: max |Φ†Φ - I|, |ΦΦ† - P| = {frame:.2e}")));

    let mut sandwich = true;
    let mut gammas = Vec::new();
    for m in &toys[..2] {
        let two = LocalTwoBand::new(m, &[0.0; 3], BandBlock::pair(0), 0.8)?;
        let g = two.gamma(0.8, 400, 1)?;
        for k in ball_samples(&[0.0; 3], 0.8, 200, 2) {
            let (_, h) = two.eh(&k)?;
            let r = torus_delta(&[0.0; 3], &k).iter().map(|x| x * x).sum::<f64>().sqrt();
            let hn = h.iter().map(|x| x * x).sum::<f64>().sqrt();
            sandwich &= r / g <= hn * 1.0001 && hn <= g * r * 1.0001;
        }
        gammas.push(format!("{g:.4}"));
    }
    items.push(line(sandwich, format!("h sandwich on independent samples, γ = [{}]", gammas.join(", "))));

    let mut kappa = Vec::new();
    let mut kappa_ok = true;
    for (m, want) in toys.iter().zip([0.0, 0.5, 1.5]) {
        let pts = find_weyl_points(m, 8)?;
        let p0 = pts.iter().find(|p| p.k_w.iter().all(|x| x.abs() < 1e-9));
        let k = p0.map(|p| p.tilt_kappa).unwrap_or(f64::NAN);
        kappa_ok &= (k - want).abs() <= 1e-12;
        kappa.push(format!("{k:.6}"));
    }
    items.push(line(kappa_ok, format!("κ = [{}] (0, 0.5, 1.5)", kappa.join(", "))));

    let chart0 = {
        let two = LocalTwoBand::new(&toys[0], &[0.0; 3], BandBlock::pair(0), 0.8)?;
        let g = two.gamma(0.8, 200, 1)?;
        WeylChart::new(two, g)?
    };
    let chart1 = {
        let two = LocalTwoBand::new(&toys[1], &[0.0; 3], BandBlock::pair(0), 0.8)?;
        let g = two.gamma(0.8, 200, 1)?;
        WeylChart::new(two, g)?
    };
    let rs: Vec<f64> = (1..=12).map(|i| 0.025 * i as f64).collect();
    let mut radial: f64 = 0.0;
    let mut monotone = true;
    for &r in &rs {
        let s: Vec<f64> = directions26().iter().map(|th| solve_s(&chart0, r, th)).collect::<Result<_>>()?;
        radial = radial.max(s.iter().map(|x| (x - s[0]).abs()).fold(0.0, f64::max));
    }
    for th in directions26() {
        let s: Vec<f64> = rs.iter().map(|&r| solve_s(&chart1, r, &th)).collect::<Result<_>>()?;
        monotone &= s.windows(2).all(|w| w[1] > w[0]);
    }
    items.push(line(monotone, "s(r, θ) increasing in r on the tilted toy".to_string()));
    items.push(line(radial <= 1e-9, format!("s(r, θ) independent of θ on the untilted toy: spread {radial:.2e}")));

    let mut census = true;
    for mu in [0.0, 0.5] {
        for _ in 0..10 {
            let w = random_k(&mut rng);
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let c = sphere_phase_check(mu, &[w[0] / n, w[1] / n, w[2] / n])?;
            census &= c.len() == 2 && c.iter().all(|p| p.nondegenerate);
        }
    }
    items.push(line(census, "sphere phase: two nondegenerate critical points for μ ∈ {0, 0.5}".to_string()));

    let mut lemma = true;
    for _ in 0..1000 {
        let z = C64::new(rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0));
        let zp = C64::new(rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0));
        let (lhs, rhs) = exp_holder_sides(z, zp, rng.random_range(0.0..20.0), rng.random_range(1e-3..=1.0));
        lemma &= lhs <= rhs * (1.0 + 1e-12) + 1e-15;
    }
    items.push(line(lemma, "exponential Hölder inequality on 1000 samples".to_string()));

    let mut eta: f64 = 0.0;
    for _ in 0..200 {
        let e = rng.random_range(-6.0..6.0);
        let z = C64::new(rng.random_range(-6.0..6.0), rng.random_range(0.01..2.0));
        eta = eta.max(eta_identity_check(e, z, rng.random_range(1.0..20.0))?);
    }
    items.push(line(eta <= 1e-10, format!("η identity defect {eta:.2e}")));

    let (runs, growth) = convolution_growth(3, 2.0, 1.0, &[8, 16])?;
    let r: Vec<String> = runs.iter().map(|c| format!("{:.3}", c.max_ratio)).collect();
    items.push(line(growth <= 0.1, format!("convolution ratio at N = 8, 16: [{}], max increase {:.3}", r.join(", "), growth)));
    items.push(within(t, Duration::from_secs(300)));
    Ok(collect(items))
}

fn c9_decomposition() -> Result<Outcome> {
    let mut items = Vec::new();
    let z = C64::new(0.3, 0.5);
    let psi = random_test_vector(3, 2, 2, 7);
    let r = decomposition_check(&reference::weyl_toy(0.0), z, &psi, &DecompositionOptions::default())?;
    items.push(line(
        r.defect <= 1e-3,
        format!("Weyl toy: {} Weyl points, {} + {} pieces, defect {:.2e}", r.weyl_points, r.one_band_pieces, r.weyl_pieces, r.defect),
    ));
    let o = DecompositionOptions { m_norms: false, ..Default::default() };
    let s = decomposition_check(&reference::laplacian(3), z, &random_test_vector(3, 1, 2, 7), &o)?;
    items.push(line(s.algebraic_defect <= 1e-10, format!("L = 1: algebraic defect {:.2e}, defect {:.2e}", s.algebraic_defect, s.defect)));
    let finite = r.m_norms.iter().all(|m| m.norm_small.is_finite() && m.norm_large.is_finite());
    items.push(line(finite, format!("{} M-operator norms finite", r.m_norms.len())));
    for alpha in [0.5, 1.5, 3.0] {
        let worst = r.m_norms.iter().filter(|m| m.alpha == alpha).max_by(|a, b| a.rel_change.abs().total_cmp(&b.rel_change.abs()));
        if let Some(m) = worst {
            items.push(line(
                m.rel_change.abs() <= 0.05,
                format!("α = {alpha}: worst piece {} norm {:.4} → {:.4} (N = {} → {}), change {:+.1}%", m.piece, m.norm_small, m.norm_large, r.m_box.0, r.m_box.1, 100.0 * m.rel_change),
            ));
        }
    }
    Ok(collect(items))
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Result<Outcome>); 9] = [
        (1, "Watson oracle at the band edge", c1_watson),
        (2, "definite decay exponent", c2_definite_decay),
        (3, "indefinite decay bound", c3_indefinite_decay),
        (4, "Weyl decay bound", c4_weyl_decay),
        (5, "limiting absorption ε-scan and Hölder fit", c5_lap),
        (6, "coarea consistency", c6_coarea),
        (7, "oscillatory integrals", c7_oscillatory),
        (8, "hypothesis suite", c8_hypotheses),
        (9, "band decomposition", c9_decomposition),
    ];
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let enabled = std::env::var("LAPKIT_ACCEPTANCE").is_ok_and(|v| v == "1");
    if picked.is_empty() && !enabled {
        println!("acceptance suite skipped; set LAPKIT_ACCEPTANCE=1 or pass criterion numbers");
        return ExitCode::SUCCESS;
    }
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (ok, lines) = match run() {
            Ok(o) => o,
            Err(e) => (false, vec![format!("FAIL error {}: {e}", e.name())]),
        };
        println!("[{}] {id}. {name} ({:.1} s)", if ok { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
        for l in lines {
            println!("      {l}");
        }
        if !ok {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
