use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use puma_core::corpus::{filter_corpus, Corpus};
use puma_core::variant_eval::{read_queries, write_logits, LogitRecord};
use puma_core::{train, TrainerConfig, Vocabulary};
use tempfile::TempDir;

const PROTEOME: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/proteome_2100.faa");

fn puma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_puma")).args(args).env_remove("PUMA_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = puma(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// The first `n` proteins of the fixture, written as FASTA into `dir`.
fn small_fasta(dir: &Path, n: usize) -> PathBuf {
    let mut c = Corpus::load(PROTEOME).unwrap();
    c.records.truncate(n);
    let path = dir.join("small.faa");
    let mut buf = Vec::new();
    c.write_fasta(&mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

fn trained(dir: &Path, fasta: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join(format!("v{}.puma", extra.join("_").replace('-', "")));
    let mut args = vec!["train", "-i", p(fasta), "-o", p(&out)];
    if !extra.contains(&"-V") {
        args.extend_from_slice(&["-V", "300"]);
    }
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn train_echoes_configuration_and_is_thread_independent() {
    let dir = TempDir::new().unwrap();
    let fasta = small_fasta(dir.path(), 120);
    let one = trained(dir.path(), &fasta, &["--threads", "1"]);
    let four = trained(dir.path(), &fasta, &["--threads", "4"]);
    let again = trained(dir.path(), &fasta, &["--threads", "1", "-a", "0.7"]);
    let bytes = fs::read(&one).unwrap();
    assert_eq!(bytes, fs::read(&four).unwrap());
    assert_eq!(bytes, fs::read(&again).unwrap());

    let vocab = Vocabulary::load(&one).unwrap();
    assert_eq!(vocab.meta.label, "PUMA(BLOSUM62, 0.7, 0.05)");
    assert_eq!(vocab.len(), 300);
    assert!(vocab.units().iter().any(|u| u.mut_parent.is_some()));
}

#[test]
fn no_mutations_matches_library_bpe() {
    let dir = TempDir::new().unwrap();
    let fasta = small_fasta(dir.path(), 80);
    let cli = Vocabulary::load(trained(dir.path(), &fasta, &["--no-mutations"])).unwrap();
    let (corpus, _) = filter_corpus(Corpus::load(&fasta).unwrap(), 3000);
    let lib = train(&corpus, TrainerConfig::new(300).without_mutations()).unwrap();
    assert_eq!(cli, lib);
    assert_eq!(cli.meta.label, "BPE");

    let puma = trained(dir.path(), &fasta, &[]);
    let bpe = dir.path().join("vnomutations.puma");
    let table = ok(&["compare-vocabs", p(&bpe), p(&puma)]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "vocab,vnomutations,v");
    assert!(rows[1].starts_with("vnomutations,1,"), "{table}");
}

#[test]
fn encode_round_trips() {
    let dir = TempDir::new().unwrap();
    let fasta = small_fasta(dir.path(), 60);
    let vocab = trained(dir.path(), &fasta, &[]);
    let tsv = ok(&["encode", "--vocab", p(&vocab), "-i", p(&fasta)]);
    let corpus = Corpus::load(&fasta).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some("id\tunits"));
    for (line, rec) in lines.zip(&corpus.records) {
        let (id, units) = line.split_once('\t').unwrap();
        assert_eq!(id, rec.id);
        assert_eq!(units.replace(' ', ""), rec.seq_str());
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.faa");
    let out = puma(&["train", "-i", p(&missing), "-o", p(&dir.path().join("x.puma"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.faa"));

    let fasta = small_fasta(dir.path(), 5);
    let out = puma(&["train", "-i", p(&fasta), "-a", "1.5", "-o", p(&dir.path().join("x.puma"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(puma(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(puma(&["train", "-i", p(&fasta), "-V", "ten", "-o", "x"]).status.code(), Some(2));

    let help = ok(&["train", "--help"]);
    for default in ["[default: 0.7]", "[default: 0.05]", "[default: 3200]", "[default: BLOSUM62]"] {
        assert!(help.contains(default), "help lacks {default}");
    }
}

#[test]
fn random_variants_are_seeded() {
    let dir = TempDir::new().unwrap();
    let fasta = small_fasta(dir.path(), 30);
    let a = ok(&["random-variants", "-i", p(&fasta), "-n", "200", "--seed", "4"]);
    let b = ok(&["random-variants", "-i", p(&fasta), "-n", "200", "--seed", "4"]);
    let c = ok(&["random-variants", "-i", p(&fasta), "-n", "200", "--seed", "5"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 201);

    let vocab = trained(dir.path(), &fasta, &["-V", "120"]);
    let variants = dir.path().join("variants.tsv");
    fs::write(&variants, &a).unwrap();
    let rates = ok(&["eval-siblings", "--vocab", p(&vocab), "--variants", p(&variants), "--fasta", p(&fasta)]);
    assert!(rates.starts_with("label\trecords\tevents\tunencodable\trate\n"), "{rates}");
}

#[test]
fn queries_and_win_rates() {
    let dir = TempDir::new().unwrap();
    let fasta = small_fasta(dir.path(), 150);
    let vocab = trained(dir.path(), &fasta, &[]);
    let queries = dir.path().join("q.jsonl");
    ok(&["gen-queries", "--vocab", p(&vocab), "-i", p(&fasta), "--seed", "1", "-o", p(&queries)]);
    let parsed = read_queries(fs::File::open(&queries).map(std::io::BufReader::new).unwrap()).unwrap();
    assert!(!parsed.is_empty());

    // residue letter value as a fake logit, so ties are impossible
    let records: Vec<LogitRecord> = parsed
        .iter()
        .map(|q| LogitRecord {
            query_id: q.query_id.clone(),
            logits: "ACDEFGHIKLMNPQRSTVWY".chars().map(|c| (c, c as u32 as f64)).collect(),
        })
        .collect();
    let logits = dir.path().join("logits.jsonl");
    let mut buf = Vec::new();
    write_logits(&records, &mut buf).unwrap();
    fs::write(&logits, buf).unwrap();

    let rate = |extra: &[&str]| -> f64 {
        let mut args = vec!["win-rate", "--queries", p(&queries), "--logits", p(&logits)];
        args.extend_from_slice(extra);
        let out = ok(&args);
        let line = out.lines().find(|l| l.starts_with("mutation_vs_alternative")).unwrap();
        line.rsplit('\t').next().unwrap().parse().unwrap()
    };
    let r = rate(&[]);
    let swapped = rate(&["--swap"]);
    assert_eq!(r + swapped, 1.0);
}

#[test]
fn topic_model_and_go_eval() {
    let dir = TempDir::new().unwrap();
    let fasta = small_fasta(dir.path(), 60);
    let vocab = trained(dir.path(), &fasta, &["-V", "200"]);
    let corpus = Corpus::load(&fasta).unwrap();
    let mut go = String::from("protein_id\tgo_id\taspect\n");
    let mut emb = String::new();
    for (i, r) in corpus.records.iter().enumerate() {
        for t in 0..4 {
            if (i + t) % 3 != 0 {
                go.push_str(&format!("{}\tGO:000000{t}\tMF\n", r.id));
            }
        }
        emb.push_str(&format!("{} {} {} {}\n", r.id, i % 3, (i % 5) as f64 / 2.0, 1.0));
    }
    let go_path = dir.path().join("go.tsv");
    let emb_path = dir.path().join("emb.txt");
    fs::write(&go_path, go).unwrap();
    fs::write(&emb_path, emb).unwrap();

    let common = ["--vocab", p(&vocab), "-i", p(&fasta), "--go", p(&go_path), "--aspect", "MF", "--min-proteins", "10"];
    let mut args = vec!["topic-model"];
    args.extend_from_slice(&common);
    let top = ok(&args);
    assert!(top.starts_with("aspect,go_id,rank,unit,value\n"), "{top}");
    assert!(top.lines().skip(1).all(|l| l.starts_with("MF,GO:")));

    let mut args = vec!["go-eval"];
    args.extend_from_slice(&common);
    args.extend_from_slice(&["--embeddings", p(&emb_path), "--shuffles", "2"]);
    let table = ok(&args);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "aspect,method,model,lambda,shuffle_seed,terms,rho");
    // two models for the true annotations and each shuffle
    assert_eq!(rows.len(), 1 + 2 * 3, "{table}");
}

#[test]
fn vocab_stats_outputs() {
    let dir = TempDir::new().unwrap();
    let fasta = small_fasta(dir.path(), 60);
    let vocab = trained(dir.path(), &fasta, &[]);
    let random = dir.path().join("random.puma");
    ok(&["random-vocab", "--reference", p(&vocab), "--seed", "3", "-o", p(&random)]);
    let out = dir.path().join("stats");
    ok(&["vocab-stats", "--vocab", p(&vocab), "-i", p(&fasta), "--compare", p(&random), "--out-dir", p(&out)]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("metric,value\n"));
    assert!(summary.contains("\nidentity,") && summary.contains("\nshared_usage_ratio,"));
    assert!(fs::read_to_string(out.join("family_sizes.csv")).unwrap().starts_with("family_size,count\n"));
    assert!(fs::read_to_string(out.join("zipf.csv")).unwrap().lines().count() > 1);
}
