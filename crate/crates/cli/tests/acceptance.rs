//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use luq_core::baselines::{deg_uncertainty, eigv_uncertainty, numsets, symmetric_eigen};
use luq_core::domain::{FactualityRecord, FrequencyLabel, Method, Query, Response, ResponseSet, SimilarityMatrix, UncertaintyScore};
use luq_core::entailment::{contradict_probability, entail_probability, EntailmentGateway, EntailmentJudgment, MockScorer};
use luq_core::eval::{ensemble_select, penalized_aggregates, pearson, percent, selective_curve, spearman, JoinedRecord, DEFAULT_GRID};
use luq_core::luq::{luq_table, luq_uncertainty, LuqVariant};
use luq_core::synthetic::SyntheticWorld;
use luq_core::text::Decomposer;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn gateway() -> EntailmentGateway {
    EntailmentGateway::uncached(Box::new(MockScorer::new()))
}

fn set_of(texts: &[&str]) -> ResponseSet {
    ResponseSet {
        query: Query {
            id: "q".into(),
            entity: "Ada".into(),
            prompt: "Tell me a bio of Ada.".into(),
            frequency_label: FrequencyLabel::default(),
        },
        main: Response::new(texts[0]),
        samples: texts[1..].iter().map(|t| Response::new(*t)).collect(),
        temperature: 1.0,
        model_id: "m".into(),
    }
}

fn softmax_identities() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (e, n, c) = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let k = rng.random_range(-100.0..100.0);
        let j = EntailmentJudgment::new(e, n, c);
        let shifted = EntailmentJudgment::new(e + k, n + k, c + k);
        let pe = entail_probability(&j).unwrap();
        let pc = contradict_probability(&j).unwrap();
        let oracle = 1.0 / (1.0 + (c - e).exp());
        worst = worst
            .max((pe + pc - 1.0).abs())
            .max((entail_probability(&shifted).unwrap() - pe).abs())
            .max((contradict_probability(&shifted).unwrap() - pc).abs())
            .max((pe - oracle).abs());
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("10000 pairs, max deviation {worst:.1e}, {:.2?}", start.elapsed()))
}

fn luq_closed_forms() -> Check {
    let gw = gateway();
    let d = Decomposer::default();
    let e = 1.0 / (1.0 + (-6.0f64).exp());
    let c = 1.0 / (1.0 + 6.0f64.exp());
    let n = 0.5;
    let texts = ["Ada was born in Lisbon. She wrote poems.", "Ada was born in Lisbon.", "Ada was born in Oslo. She wrote poems."];
    let rs = set_of(&texts);

    let c0 = ((e + n) / 2.0 + (c + e) / 2.0) / 2.0;
    let c1 = (e + c) / 2.0;
    let c2 = ((c + e) / 2.0 + (c + n) / 2.0) / 2.0;
    let want = 1.0 - (c0 + c1 + c2) / 3.0;
    let got = luq_uncertainty(&rs, &gw, &d, LuqVariant::Luq).map_err(|x| x.to_string())?.value;
    ensure((got - want).abs() <= 1e-12, format!("LUQ {got} vs {want}"))?;

    let p0 = ((e + n) / 2.0 + (n + e) / 2.0) / 2.0;
    let p1 = (e + n) / 2.0;
    let p2 = ((n + e) / 2.0 + (c + n) / 2.0) / 2.0;
    let want_pair = 1.0 - (p0 + p1 + p2) / 3.0;
    let got_pair = luq_uncertainty(&rs, &gw, &d, LuqVariant::LuqPair).map_err(|x| x.to_string())?.value;
    ensure((got_pair - want_pair).abs() <= 1e-12, format!("LUQ-Pair {got_pair} vs {want_pair}"))?;

    const POOL: &[&str] = &[
        "Ada was born in Lisbon.",
        "Ada was born in Oslo.",
        "She studied physics at Leiden.",
        "She studied law at Leiden.",
        "She won the Hale Prize.",
        "She wrote three novels.",
        "She retired in Porto.",
        "Her brother was a painter.",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..1000 {
        let m = rng.random_range(2..=6);
        let owned: Vec<String> = (0..m)
            .map(|_| {
                let k = rng.random_range(1..=3);
                (0..k).map(|_| POOL[rng.random_range(0..POOL.len())]).collect::<Vec<_>>().join(" ")
            })
            .collect();
        let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
        let rs = set_of(&refs);
        for v in [LuqVariant::Luq, LuqVariant::LuqPair, LuqVariant::LuqAtomic] {
            let t = luq_table(&rs, &gw, &d, v).map_err(|x| x.to_string())?;
            ensure((0.0..=1.0).contains(&t.uncertainty), format!("trial {trial}: U = {}", t.uncertainty))?;
            let confs: Vec<f64> = t.confidence.values().copied().collect();
            let mean = confs.iter().sum::<f64>() / confs.len() as f64;
            ensure(t.uncertainty == 1.0 - mean, format!("trial {trial}: U != 1 - mean C"))?;
            for (&i, &ci) in &t.confidence {
                let sims: Vec<f64> = t.similarity.iter().filter(|((a, _), _)| *a == i).map(|(_, s)| *s).collect();
                ensure(ci == sims.iter().sum::<f64>() / sims.len() as f64, format!("trial {trial}: C({i})"))?;
            }
        }
    }
    Ok(format!("fixture U = {got:.12}, pair U = {got_pair:.12}; 1000 random sets in [0, 1]"))
}

/// Restricted growth strings: every set partition of `m` items exactly once.
fn partitions(m: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, m: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == m {
            out.push(prefix.clone());
            return;
        }
        let top = prefix.iter().copied().max().map_or(0, |x| x + 1);
        for label in 0..=top {
            prefix.push(label);
            grow(prefix, m, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), m, &mut out);
    out
}

fn spectral_coincidence() -> Check {
    const NAMES: &[&str] = &["Ames", "Boyd", "Cato", "Drew", "Enzo", "Faye", "Gale", "Hugo"];
    const CITIES: &[&str] = &["Lisbon", "Oslo", "Quito", "Lima", "Riga", "Bern", "Cairo", "Delhi"];
    let start = Instant::now();
    let gw = gateway();
    let mut count = 0;
    for m in 1..=8 {
        for labels in partitions(m) {
            let blocks = labels.iter().max().unwrap() + 1;
            let eigv = eigv_uncertainty(&SimilarityMatrix::from_blocks(&labels)).map_err(|e| e.to_string())?.value;
            let owned: Vec<Response> =
                labels.iter().map(|&l| Response::new(format!("{} was born in {}.", NAMES[l], CITIES[l]))).collect();
            let refs: Vec<&Response> = owned.iter().collect();
            let sets = numsets(&refs, &gw, 0.5).map_err(|e| e.to_string())?.value;
            ensure(
                (eigv - blocks as f64).abs() <= 1e-6 && sets == blocks as f64,
                format!("{labels:?}: eigv {eigv}, numsets {sets}, blocks {blocks}"),
            )?;
            count += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{count} partitions, {:.2?}", start.elapsed()))
}

fn deg_closed_forms() -> Check {
    for m in 2..=8 {
        let ones = deg_uncertainty(&SimilarityMatrix::ones(m)).value;
        let id = deg_uncertainty(&SimilarityMatrix::identity(m)).value;
        let want = (m as f64 - 1.0) / m as f64;
        ensure(ones.abs() <= 1e-9, format!("m={m}: all-ones gives {ones}"))?;
        ensure((id - want).abs() <= 1e-9, format!("m={m}: identity gives {id}, want {want}"))?;
    }
    Ok("m = 2..8".into())
}

fn eigensolver_residuals() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_rec, mut worst_orth): (f64, f64) = (0.0, 0.0);
    for trial in 0..100 {
        let m = 1 + trial % 12;
        let mut a = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i..m {
                let v = rng.random_range(-5.0..5.0);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        let d = symmetric_eigen(&a).map_err(|e| e.to_string())?;
        let v = &d.eigenvectors;
        let (mut rec, mut orth) = (0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                let r: f64 = (0..m).map(|k| v[k][i] * d.eigenvalues[k] * v[k][j]).sum::<f64>() - a[i][j];
                let o: f64 = (0..m).map(|k| v[i][k] * v[j][k]).sum::<f64>() - if i == j { 1.0 } else { 0.0 };
                rec += r * r;
                orth += o * o;
            }
        }
        worst_rec = worst_rec.max(rec.sqrt());
        worst_orth = worst_orth.max(orth.sqrt());
    }
    ensure(worst_rec <= 1e-8 && worst_orth <= 1e-8, format!("reconstruction {worst_rec:e}, orthonormality {worst_orth:e}"))?;
    Ok(format!("100 matrices, reconstruction {worst_rec:.1e}, orthonormality {worst_orth:.1e}"))
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn correlation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 1000 {
        let n = rng.random_range(3..=50);
        let ties = rng.random_bool(0.5);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-10.0..10.0f64)).map(|v| if ties { v.round() } else { v }).collect()
        };
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let (Ok(p), Ok(s)) = (pearson(&x, &y), spearman(&x, &y)) else { continue };
        worst = worst
            .max((p - brute_pearson(&x, &y)).abs())
            .max((s - brute_pearson(&brute_ranks(&x), &brute_ranks(&y))).abs());
        let fx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        let gy: Vec<f64> = y.iter().map(|v| (v / 10.0).exp()).collect();
        ensure(spearman(&fx, &gy).map_err(|e| e.to_string())? == s, "spearman changed under a monotone transform")?;
        checked += 1;
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    Ok(format!("1000 vector pairs, max deviation {worst:.1e}"))
}

fn synthetic_correlation() -> Check {
    let start = Instant::now();
    let world = SyntheticWorld::new(42);
    let gw = gateway();
    let d = Decomposer::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut fs, mut us, mut random) = (Vec::new(), Vec::new(), Vec::new());
    for q in world.queries(200) {
        let f = rng.random_range(0.15..1.0);
        let rs = world.response_set("synth-alpha", &q, f, 10);
        us.push(luq_uncertainty(&rs, &gw, &d, LuqVariant::Luq).map_err(|e| format!("{}: {e}", q.id))?.value);
        fs.push(f);
        random.push(rng.random_range(0.0..1.0));
    }
    let scc = spearman(&us, &fs).map_err(|e| e.to_string())?;
    let base = spearman(&random, &fs).map_err(|e| e.to_string())?;
    ensure(scc <= -0.9, format!("LUQ SCC {scc:.4}"))?;
    ensure(base.abs() <= 0.15, format!("random SCC {base:.4}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("LUQ SCC {scc:.4}, random SCC {base:.4}, {:.2?}", start.elapsed()))
}

fn joined(query: usize, model: &str, fs: f64, responded: bool, u: f64) -> JoinedRecord {
    let mut scores = BTreeMap::new();
    if responded {
        scores.insert(Method::Luq, UncertaintyScore::new(Method::Luq, u));
    }
    JoinedRecord {
        query_id: format!("q{query:03}"),
        model_id: model.into(),
        scores,
        factuality: FactualityRecord {
            query_id: format!("q{query:03}"),
            fs: if responded { fs } else { 0.0 },
            responded,
            num_facts: None,
            frequency: None,
            model_id: Some(model.into()),
        },
        frequency: FrequencyLabel::default(),
    }
}

fn ensemble_direction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models = ["synth-alpha", "synth-beta", "synth-gamma"];
    let mut per_model: BTreeMap<String, Vec<JoinedRecord>> = BTreeMap::new();
    for (k, m) in models.iter().enumerate() {
        let skill = 0.2 * k as f64;
        let recs = (0..100)
            .map(|q| {
                let fs: f64 = (rng.random_range(0.0..0.8) + skill).min(1.0);
                let responded = !rng.random_bool(0.05);
                joined(q, m, fs, responded, 1.0 - fs)
            })
            .collect();
        per_model.insert(m.to_string(), recs);
    }
    let priority: Vec<String> = models.iter().map(|s| s.to_string()).collect();
    let e = ensemble_select(&per_model, Method::Luq, &priority).map_err(|e| e.to_string())?;
    let mut max_pfs = f64::NEG_INFINITY;
    let mut min_us = f64::INFINITY;
    for recs in per_model.values() {
        let a = penalized_aggregates(recs, Method::Luq, false).map_err(|e| e.to_string())?;
        max_pfs = max_pfs.max(a.pfs);
        min_us = min_us.min(a.us.ok_or("component US undefined")?);
    }
    let (pfs, us) = (e.aggregates.pfs, e.aggregates.us.ok_or("ensemble US undefined")?);
    ensure(pfs >= max_pfs, format!("ensemble PFS {pfs:.4} < {max_pfs:.4}"))?;
    ensure(us <= min_us, format!("ensemble US {us:.4} > {min_us:.4}"))?;
    Ok(format!("PFS {pfs:.4} vs best {max_pfs:.4}; US {us:.4} vs best {min_us:.4}"))
}

fn selective_direction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q = 400;
    let fs: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..1.0)).collect();
    let perfect: Vec<JoinedRecord> = fs.iter().enumerate().map(|(i, &f)| joined(i, "m", f, true, 1.0 - f)).collect();
    let curve = selective_curve(&perfect, Method::Luq, &DEFAULT_GRID).map_err(|e| e.to_string())?;
    let means: Vec<f64> = curve.points.iter().map(|p| p.fs).collect();
    ensure(means.windows(2).all(|w| w[1] >= w[0]), format!("inverse ranking not monotone: {means:?}"))?;

    let random: Vec<JoinedRecord> =
        fs.iter().enumerate().map(|(i, &f)| joined(i, "m", f, true, rng.random_range(0.0..1.0))).collect();
    let flat = selective_curve(&random, Method::Luq, &DEFAULT_GRID).map_err(|e| e.to_string())?;
    let mean = fs.iter().sum::<f64>() / q as f64;
    let sd = (fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (q as f64 - 1.0)).sqrt();
    for p in &flat.points {
        // Three standard errors of the retained mean around the full mean.
        let bound = 3.0 * sd * (p.dropped as f64 / (q as f64 * p.retained as f64)).sqrt();
        ensure(
            (p.fs - flat.points[0].fs).abs() <= bound.max(1e-12),
            format!("random ranking at {}%: {:.4} vs {:.4} (bound {bound:.4})", p.percentile, p.fs, flat.points[0].fs),
        )?;
    }
    Ok(format!(
        "inverse FS {:.3} -> {:.3}; random FS {:.3} -> {:.3}",
        means[0],
        means[means.len() - 1],
        flat.points[0].fs,
        flat.points[flat.points.len() - 1].fs
    ))
}

fn penalization_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..100 {
        let recs: Vec<JoinedRecord> = (0..rng.random_range(1..60))
            .map(|i| joined(i, "m", rng.random_range(0.0..1.0), true, rng.random_range(0.0..1.0)))
            .collect();
        let a = penalized_aggregates(&recs, Method::Luq, false).map_err(|e| e.to_string())?;
        ensure(percent(a.rr) == 100.0, format!("trial {trial}: RR {}", percent(a.rr)))?;
        ensure(Some(a.pfs) == a.fs && a.pus == a.us, format!("trial {trial}: {a:?}"))?;
    }
    Ok("100 fully answered sets".into())
}

fn run_pipeline(data: &Path, work: &Path) -> Result<PathBuf, String> {
    for f in ["queries.jsonl", "factuality.jsonl", "luq.toml"] {
        std::fs::copy(data.join(f), work.join(f)).map_err(|e| format!("{f}: {e}"))?;
    }
    let config = work.join("luq.toml");
    let steps: [&[&str]; 5] = [&["sample"], &["estimate"], &["eval", "--ensemble", "--selective"], &["ensemble"], &["select"]];
    for args in steps {
        let status = Command::new(env!("CARGO_BIN_EXE_luq"))
            .args(args)
            .arg("--config")
            .arg(&config)
            .arg("--scorer")
            .arg("mock")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), format!("{args:?} failed: {}", String::from_utf8_lossy(&status.stderr)))?;
    }
    Ok(work.join("runs/demo"))
}

fn determinism() -> Check {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_a = run_pipeline(&data, a.path())?;
    let out_b = run_pipeline(&data, b.path())?;
    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    ensure(names.len() >= 10, format!("only {} output files", names.len()))?;
    for name in &names {
        let x = std::fs::read(out_a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(out_b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(x == y, format!("{name} differs"))?;
    }
    Ok(format!("{} files identical", names.len()))
}

fn main() -> ExitCode {
    let checks: [Criterion; 11] = [
        ("softmax identities", softmax_identities),
        ("LUQ closed forms", luq_closed_forms),
        ("spectral coincidence", spectral_coincidence),
        ("Deg closed forms", deg_closed_forms),
        ("eigensolver residuals", eigensolver_residuals),
        ("correlation oracle", correlation_oracle),
        ("synthetic correlation direction", synthetic_correlation),
        ("ensemble direction", ensemble_direction),
        ("selective answering direction", selective_direction),
        ("penalization identity", penalization_identity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
