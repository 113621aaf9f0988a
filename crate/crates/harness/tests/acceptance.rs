//! End-to-end acceptance checks, one printed line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the report is always
//! shown. Exits non-zero if any criterion fails.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use bssrdf_core::catmullrom::{eval_1d, integrate_1d, sample_1d, Grid1D};
use bssrdf_core::wrapped_cauchy::{gwc_cdf, gwc_eval, gwc_fit, gwc_sample, AnchorSet, FitStatus};
use bssrdf_core::{build_table, BeamOracle, BssrdfTable, GwcParams, MediumParams, SignConvention};
use bssrdf_harness::rng;
use bssrdf_harness::stats::{relative_errors, validate, ErrorStats};
use bssrdf_harness::trace::{
    channel_centroids, channel_spread, rotation_residual, trace_beam, SlabScene,
};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const ETA: f64 = 1.33;
const RHOS: [f64; 3] = [0.5, 0.9, 0.99];
const THETAS_DEG: [f64; 3] = [0.0, 60.0, 89.0];
/// Target mean relative errors (%), rows θ, columns ρ.
const TARGET_MEAN: [[f64; 3]; 3] = [
    [0.026, 0.026, 0.021],
    [0.08, 0.26, 0.25],
    [0.22, 0.53, 0.48],
];

const VALIDATION_POINTS: usize = 100_000;
const MEAN_FACTOR: f64 = 3.0;
const MEAN_CAP: f64 = 1.0;
const P99_LIMIT: f64 = 2.0;
const CHANNEL_BYTES: usize = 1_024_000;
const FILE_LIMIT: usize = 1_310_720; // 1.25 MiB
const ORACLE_AGREEMENT: f64 = 1e-3;
const FIT_TOLERANCE: f64 = 1e-8;
const SIGNIFICANCE: f64 = 0.01;
const CDF_INVERSION: f64 = 1e-9;
const LINEAR_REPRODUCTION: f64 = 1e-10;
const KS_LIMIT: f64 = 0.002;
const NORMALIZATION: f64 = 1e-3;
const SYMMETRY_LIMIT: f64 = 0.02;
const SEED: u64 = 0;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'a str, &'a dyn Fn(&Context) -> Outcome);

fn configs() -> impl Iterator<Item = (usize, usize, f64, f64)> {
    (0..3).flat_map(|j| (0..3).map(move |i| (i, j, RHOS[i], THETAS_DEG[j].to_radians())))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Context {
    table: BssrdfTable,
    stats: OnceLock<Vec<ErrorStats>>,
}

impl Context {
    /// Validation statistics of the nine configurations, computed once.
    fn stats(&self) -> &[ErrorStats] {
        self.stats.get_or_init(|| {
            configs()
                .map(|(_, _, rho, theta)| {
                    validate(&self.table, rho, theta, VALIDATION_POINTS, SEED).expect("validation")
                })
                .collect()
        })
    }
}

fn criterion_1(ctx: &Context) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for ((i, j, rho, _), s) in configs().zip(ctx.stats()) {
        let limit = (MEAN_FACTOR * TARGET_MEAN[j][i]).min(MEAN_CAP);
        let pass = s.mean_rel_error <= limit;
        ok &= pass;
        parts.push(format!(
            "({rho},{}°) {:.3}%/{:.3}%{}",
            THETAS_DEG[j],
            s.mean_rel_error,
            limit,
            if pass { "" } else { " !" }
        ));
    }
    check(ok, parts.join(" "))
}

fn criterion_2(ctx: &Context) -> Outcome {
    let s = &ctx.stats()[8];
    check(
        s.p99 <= P99_LIMIT,
        format!("p99 {:.3}% (limit {P99_LIMIT}%), max {:.3}%", s.p99, s.max),
    )
}

fn criterion_3(ctx: &Context) -> Outcome {
    let channels = ctx.table.channel_bytes();
    let file = ctx.table.to_bytes().len();
    check(
        channels == CHANNEL_BYTES && file <= FILE_LIMIT,
        format!("channel data {channels} bytes, file {file} bytes (limit {FILE_LIMIT})"),
    )
}

fn criterion_4() -> Outcome {
    let points: Vec<(f64, f64, f64, f64)> = (0..100u64)
        .map(|k| {
            let mut r = rng::stream(4, k);
            let rho = 0.3 + 0.69 * r.random::<f64>();
            let theta = 89f64.to_radians() * r.random::<f64>();
            let radius = 0.05 * (8.0f64 / 0.05).powf(r.random::<f64>());
            let phi = -PI + TAU * r.random::<f64>();
            (rho, theta, radius, phi)
        })
        .collect();
    let worst = points
        .par_iter()
        .map(|&(rho, theta, r, phi)| {
            let p = MediumParams::from_albedo(ETA, 0.0, rho).unwrap();
            let o = BeamOracle::new(&p, theta, SignConvention::LITERAL).unwrap();
            let coarse = o.eval(r, phi, 200).unwrap();
            let fine = o.eval(r, phi, 10_000).unwrap();
            ((coarse - fine) / fine).abs()
        })
        .reduce(|| 0.0, f64::max);

    let p = MediumParams::from_albedo(ETA, 0.0, 0.8).unwrap();
    let normal = BeamOracle::new(&p, 0.0, SignConvention::LITERAL).unwrap();
    let oblique = BeamOracle::new(&p, 1.2, SignConvention::LITERAL).unwrap();
    let (mut azimuthal, mut odd) = (0.0f64, 0.0f64);
    for r in [0.01, 0.1, 0.5, 1.0, 3.0, 10.0] {
        let base = normal.eval(r, 0.0, 1000).unwrap();
        for phi in [0.3, 1.0, 2.0, 3.0, PI] {
            let v = normal.eval(r, phi, 1000).unwrap();
            azimuthal = azimuthal.max(((v - base) / base).abs());
            for o in [&normal, &oblique] {
                odd =
                    odd.max((o.eval(r, phi, 1000).unwrap() - o.eval(r, -phi, 1000).unwrap()).abs());
            }
        }
    }
    check(
        worst <= ORACLE_AGREEMENT && azimuthal <= 4.0 * f64::EPSILON && odd == 0.0,
        format!(
            "200 vs 10^4 samples max rel diff {worst:.2e} (limit {ORACLE_AGREEMENT:e}); \
             normal incidence azimuthal spread {azimuthal:.1e}; evenness defect {odd:e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let anchors = AnchorSet::OPTIMIZED;
    let mut worst = 0.0f64;
    let mut not_exact = 0;
    for k in 0..10_000u64 {
        let mut r = rng::stream(5, k);
        let beta = 0.01 * 1000f64.powf(r.random::<f64>());
        let c = 0.01 + 0.98 * r.random::<f64>();
        let alpha = GwcParams::alpha_floor(beta, c) + 2.0 * r.random::<f64>() * beta / TAU;
        let [f1, f2, f3] = anchors
            .angles()
            .map(|phi| gwc_eval(phi, &GwcParams::new(alpha, beta, c)));
        let fit = gwc_fit(f1, f2, f3, &anchors).unwrap();
        if fit.status != FitStatus::Exact {
            not_exact += 1;
        }
        let q = fit.params;
        worst = worst
            .max((q.alpha - alpha).abs() / alpha.abs().max(beta / TAU))
            .max((q.beta - beta).abs() / beta)
            .max((q.c - c).abs() / c);
    }
    let mut degenerate_ok = true;
    for f in [0.0, 1e-7, 0.2, 3.5, 1e4] {
        let fit = gwc_fit(f, f, f, &anchors).unwrap();
        degenerate_ok &=
            fit.status == FitStatus::Degenerate && fit.params == GwcParams::new(0.0, TAU * f, 0.0);
    }
    check(
        worst <= FIT_TOLERANCE && not_exact == 0 && degenerate_ok,
        format!(
            "10^4 triples, max rel error {worst:.2e} (limit {FIT_TOLERANCE:e}), {not_exact} not exact; \
             degenerate branch {}",
            if degenerate_ok { "exact" } else { "WRONG" }
        ),
    )
}

/// Upper-tail p-value of Pearson's statistic after pooling bins expected to
/// hold fewer than 5 draws.
fn chi_square(observed: &[u64], expected: &[f64]) -> (f64, usize, f64) {
    let (mut stat, mut bins) = (0.0, 0);
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        if *e < 5.0 {
            pool_o += *o as f64;
            pool_e += e;
        } else {
            stat += (*o as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e.max(1e-300);
        bins += 1;
    }
    let dof = (bins - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
    (stat, bins - 1, p)
}

fn criterion_6(ctx: &Context) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let draws = 1_000_000u64;
    let n_bins = 64;
    let mut worst_inv = 0.0f64;
    for c in [0.0, 0.5, 0.9, 0.99] {
        let p = GwcParams::new(GwcParams::alpha_floor(1.0, c) + 0.02, 1.0, c);
        let (counts, inv) = (0..draws)
            .into_par_iter()
            .map(|k| {
                let u: f64 = rng::stream(6, k).random();
                let phi = gwc_sample(u, &p).unwrap();
                let err = (gwc_cdf(phi, &p).unwrap() - u).abs();
                let b = (((phi + PI) / TAU * n_bins as f64) as usize).min(n_bins - 1);
                (b, err)
            })
            .fold(
                || (vec![0u64; n_bins], 0.0f64),
                |(mut h, m), (b, e)| {
                    h[b] += 1;
                    (h, m.max(e))
                },
            )
            .reduce(
                || (vec![0u64; n_bins], 0.0f64),
                |(mut a, ma), (b, mb)| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    (a, ma.max(mb))
                },
            );
        worst_inv = worst_inv.max(inv);
        let expected: Vec<f64> = (0..n_bins)
            .map(|b| {
                let lo = -PI + TAU * b as f64 / n_bins as f64;
                let hi = -PI + TAU * (b + 1) as f64 / n_bins as f64;
                draws as f64 * (gwc_cdf(hi, &p).unwrap() - gwc_cdf(lo, &p).unwrap())
            })
            .collect();
        let (_, _, pv) = chi_square(&counts, &expected);
        ok &= pv >= SIGNIFICANCE;
        parts.push(format!("c={c} p={pv:.3}"));
    }
    ok &= worst_inv <= CDF_INVERSION;
    parts.push(format!("cdf inversion {worst_inv:.1e};"));

    for (_, j, rho, theta) in configs() {
        let (pv, dof) = exit_chi_square(&ctx.table, rho, theta);
        ok &= pv >= SIGNIFICANCE;
        parts.push(format!("exit({rho},{}°) p={pv:.3}/{dof}", THETAS_DEG[j]));
    }
    check(ok, parts.join(" "))
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// χ² of 10⁶ `sample_exit` draws on a 32×32 grid of radial quantile bins
/// times uniform azimuth bins. Expected counts integrate the density over
/// each bin: Simpson in `r` between table nodes, the closed-form azimuthal
/// CDF in `φ`.
fn exit_chi_square(table: &BssrdfTable, rho: f64, theta: f64) -> (f64, usize) {
    const N: usize = 32;
    let draws = 1_000_000u64;
    let dist = table.exit_distribution(rho, theta).unwrap();
    let mut r_edges: Vec<f64> = (0..=N)
        .map(|k| dist.sample(k as f64 / N as f64, 0.5).unwrap().r)
        .collect();
    r_edges[N] = table.grids().r.last();
    let r_bin = |r: f64| r_edges.partition_point(|e| *e <= r).clamp(1, N) - 1;
    let phi_bin = |phi: f64| ((((phi + PI) / TAU) * N as f64) as usize).min(N - 1);

    let counts = (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut g = rng::stream(66, k);
            let s = dist.sample(g.random(), g.random()).unwrap();
            r_bin(s.r) * N + phi_bin(s.phi)
        })
        .fold(
            || vec![0u64; N * N],
            |mut h, b| {
                h[b] += 1;
                h
            },
        )
        .reduce(
            || vec![0u64; N * N],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let nodes = table.grids().r.nodes();
    let expected: Vec<f64> = (0..N)
        .into_par_iter()
        .flat_map_iter(|a| {
            let (lo, hi) = (r_edges[a], r_edges[a + 1]);
            let mut cuts = vec![lo];
            cuts.extend(nodes.iter().copied().filter(|x| *x > lo && *x < hi));
            cuts.push(hi);
            let mut probs = vec![0.0; N];
            for w in cuts.windows(2) {
                let per_bin = |r: f64, b: usize| -> f64 {
                    let radial = dist.radial_pdf(r).unwrap();
                    if radial == 0.0 {
                        return 0.0;
                    }
                    let Some(p) = table
                        .params(rho, theta, r)
                        .unwrap()
                        .filter(|p| p.mass() > 0.0)
                    else {
                        return 0.0;
                    };
                    let e0 = -PI + TAU * b as f64 / N as f64;
                    let e1 = -PI + TAU * (b + 1) as f64 / N as f64;
                    radial * (gwc_cdf(e1, &p).unwrap() - gwc_cdf(e0, &p).unwrap())
                };
                for (b, prob) in probs.iter_mut().enumerate() {
                    *prob += simpson(w[0], w[1], 16, |r| per_bin(r, b));
                }
            }
            probs.into_iter().map(|p| p * draws as f64)
        })
        .collect();
    let (_, dof, p) = chi_square(&counts, &expected);
    (p, dof)
}

fn criterion_7() -> Outcome {
    let mut g = rng::stream(7, 0);
    let (mut node_exact, mut linear) = (true, 0.0f64);
    for _ in 0..100 {
        let n = g.random_range(4..40);
        let mut x = vec![g.random::<f64>() * 10.0 - 5.0];
        for _ in 1..n {
            x.push(x[x.len() - 1] + 0.01 + g.random::<f64>());
        }
        let grid = Grid1D::new(x.clone()).unwrap();
        let v: Vec<f64> = (0..n).map(|_| g.random::<f64>() * 4.0 - 1.0).collect();
        for (xi, vi) in x.iter().zip(&v) {
            node_exact &= eval_1d(&grid, &v, *xi).unwrap() == *vi;
        }
        let (m, b) = (g.random::<f64>() * 6.0 - 3.0, g.random::<f64>() * 2.0 - 1.0);
        let lin: Vec<f64> = x.iter().map(|xi| m * xi + b).collect();
        for _ in 0..50 {
            let q = x[0] + (x[n - 1] - x[0]) * g.random::<f64>();
            let want = m * q + b;
            let got = eval_1d(&grid, &lin, q).unwrap();
            linear = linear.max((got - want).abs() / want.abs().max(1.0));
        }
    }

    // Triangular density on [0, 1] with its apex at 0.3, tabulated at 201 nodes.
    let x: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
    let tri = |t: f64| if t < 0.3 { t / 0.3 } else { (1.0 - t) / 0.7 };
    let tri_cdf = |t: f64| {
        if t < 0.3 {
            t * t / 0.3
        } else {
            1.0 - (1.0 - t).powi(2) / 0.7
        }
    };
    let grid = Grid1D::new(x.clone()).unwrap();
    let v: Vec<f64> = x.iter().map(|t| tri(*t)).collect();
    let (cum, _) = integrate_1d(&grid, &v, None).unwrap();
    let mut draws: Vec<f64> = (0..1_000_000u64)
        .into_par_iter()
        .map(|k| {
            sample_1d(&grid, &v, &cum, rng::stream(77, k).random())
                .unwrap()
                .0
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let f = tri_cdf(*d);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    check(
        node_exact && linear <= LINEAR_REPRODUCTION && ks <= KS_LIMIT,
        format!(
            "nodes {}, linear max error {linear:.1e} (limit {LINEAR_REPRODUCTION:e}), \
             triangular KS {ks:.5} (limit {KS_LIMIT})",
            if node_exact { "exact" } else { "NOT exact" }
        ),
    )
}

fn criterion_8(ctx: &Context) -> Outcome {
    let nodes = ctx.table.grids().r.nodes();
    let results: Vec<(f64, f64, f64)> = configs()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(_, _, rho, theta)| {
            let d = ctx.table.exit_distribution(rho, theta).unwrap();
            // φ = π s³ clusters azimuth nodes around the forward peak.
            let ring = |r: f64| {
                simpson(-1.0, 1.0, 512, |s| {
                    3.0 * PI * s * s * d.pdf(r, PI * s * s * s).unwrap()
                })
            };
            let total: f64 = nodes
                .windows(2)
                .map(|w| simpson(w[0], w[1], 16, ring))
                .sum();
            (rho, theta, total)
        })
        .collect();
    let worst = results
        .iter()
        .map(|(_, _, t)| (t - 1.0).abs())
        .fold(0.0, f64::max);
    let detail = results
        .iter()
        .map(|(rho, theta, t)| format!("({rho},{:.0}°) {t:.6}", theta.to_degrees()))
        .collect::<Vec<_>>()
        .join(" ");
    check(
        worst <= NORMALIZATION,
        format!("max |mass - 1| {worst:.1e} (limit {NORMALIZATION:e}): {detail}"),
    )
}

fn criterion_9(ctx: &Context) -> Outcome {
    let tables = [&ctx.table, &ctx.table, &ctx.table];
    let normal = SlabScene {
        theta_deg: 0.0,
        width: 64,
        height: 64,
        particles: 10_000_000,
        ..SlabScene::default()
    };
    let residual = rotation_residual(&trace_beam(&normal, tables).map_err(|e| e.to_string())?);

    let oblique = SlabScene::default();
    let img = trace_beam(&oblique, tables).map_err(|e| e.to_string())?;
    let cen = channel_centroids(&img, &oblique);
    let spread = channel_spread(&img, &oblique);
    let forward = cen.iter().all(|(x, y)| *x > 0.0 && y.abs() < 0.05 * x);
    let ordered = cen[0].0 >= cen[1].0 && cen[1].0 >= cen[2].0;
    let extent = spread[0] >= spread[1] && spread[1] >= spread[2];
    check(
        residual <= SYMMETRY_LIMIT && forward && ordered && extent,
        format!(
            "normal incidence residual {:.2}% of peak (limit {}%); 60° centroid x R/G/B \
             {:.3}/{:.3}/{:.3}, spread {:.2}/{:.2}/{:.2}",
            residual * 100.0,
            SYMMETRY_LIMIT * 100.0,
            cen[0].0,
            cen[1].0,
            cen[2].0,
            spread[0],
            spread[1],
            spread[2]
        ),
    )
}

fn criterion_10(ctx: &Context) -> Outcome {
    let again = build_table(ETA, 0.0, 100).map_err(|e| e.to_string())?;
    let builds = again.to_bytes() == ctx.table.to_bytes();
    let theta = 60f64.to_radians();
    let a = relative_errors(&ctx.table, 0.9, theta, 10_000, 3).map_err(|e| e.to_string())?;
    let b = relative_errors(&ctx.table, 0.9, theta, 10_000, 3).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let runs = bits(&a.errors) == bits(&b.errors) && a.excluded == b.excluded;
    check(
        builds && runs,
        format!(
            "table builds {}, validation runs {}",
            if builds { "identical" } else { "DIFFER" },
            if runs { "identical" } else { "DIFFER" }
        ),
    )
}

fn main() {
    // Optional comma-separated list of criteria to run, e.g. "6,7".
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let start = Instant::now();
    let table = build_table(ETA, 0.0, 100).expect("standard table");
    println!(
        "acceptance: standard table built in {:.1} s",
        start.elapsed().as_secs_f64()
    );
    let ctx = Context {
        table,
        stats: OnceLock::new(),
    };

    let criteria: [Criterion; 10] = [
        ("mean relative error at nine configurations", &criterion_1),
        ("p99 relative error at grazing incidence", &criterion_2),
        ("table size", &criterion_3),
        ("oracle self-consistency", &|_| criterion_4()),
        ("angular fit round trip", &|_| criterion_5()),
        ("sampling goodness of fit", &criterion_6),
        ("spline properties", &|_| criterion_7()),
        ("exit pdf normalization", &criterion_8),
        ("slab render shape", &criterion_9),
        ("determinism", &criterion_10),
    ];
    let (mut failed, mut skipped) = (0, 0);
    for (k, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(k + 1))) {
            skipped += 1;
            println!("criterion {:>2} SKIP  {name}", k + 1);
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&ctx))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.0} s]", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.0} s]", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed, {skipped} skipped",
        10 - failed - skipped
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
