use std::path::{Path, PathBuf};

use amnet_core::metrics::{write_wav, WavAudio, SAMPLE_RATE};
use amnet_core::phrase::{viterbi, HmmModel};
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("amnet-cli").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {:?}", self.stdout))
    }

    fn error(&self) -> Value {
        assert_eq!(self.stderr.lines().count(), 1, "{:?}", self.stderr);
        serde_json::from_str(&self.stderr).unwrap()
    }
}

fn amnet(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("amnet").chain(args.iter().copied());
    let code = amnet_cli::run(argv, &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sine_wav(dir: &Path, name: &str, freq: impl Fn(f64) -> f64, noise: f64) -> PathBuf {
    let sr = SAMPLE_RATE as f64;
    let mut phase = 0.0;
    let mut state = 0x2545_F491_4F6C_DD1Du64;
    let samples = (0..SAMPLE_RATE as usize)
        .map(|i| {
            phase += 2.0 * std::f64::consts::PI * freq(i as f64 / sr) / sr;
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let jitter = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            0.5 * phase.sin() + noise * jitter
        })
        .collect();
    let file = dir.join(name);
    std::fs::write(&file, write_wav(&WavAudio { sample_rate: SAMPLE_RATE, samples })).unwrap();
    file
}

#[test]
fn train_hmm_reproduces_fixture_model() {
    let dir = scratch("train");
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/phrase_corpus.txt");
    let out = dir.join("model.json");
    let run = amnet(&["train-hmm", "--corpus", path(&corpus), "--out", path(&out)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.json()["vocab"], 39);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(fixtures().join("model.json")).unwrap());
}

#[test]
fn segment_golden_agrees_with_exhaustive_search() {
    let golden: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("segment.json")).unwrap()).unwrap();
    let model = HmmModel::from_json(&std::fs::read_to_string(fixtures().join("model.json")).unwrap()).unwrap();
    let text: Vec<char> = golden["chars"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c.as_str().unwrap().chars().next().unwrap())
        .collect();
    // The exhaustive search caps out at 12 positions, which this sentence fits.
    assert_eq!(text.len(), 12);
    let emit: Vec<[f64; 4]> = text.iter().map(|&c| std::array::from_fn(|s| model.emission(s, c))).collect();
    let want = amnet_oracle::best_path(&model.log_init, &model.log_trans, &emit);
    let names = ["B", "M", "E", "S"];
    let want: Vec<&str> = want.iter().map(|&s| names[s]).collect();
    let got: Vec<&str> = golden["labels"].as_array().unwrap().iter().map(|l| l.as_str().unwrap()).collect();
    assert_eq!(got, want);
    let decoded: Vec<&str> = viterbi(&model, &text).iter().map(|l| l.as_str()).collect();
    assert_eq!(decoded, want);
}

#[test]
fn duration_aggregates_frontend_spans() {
    let fe = fixtures().join("frontend.json");
    let run = amnet(&["duration", "--frontend-json", path(&fe), "--durations", "2,3,4,1,5,6"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.stdout, "{\"phrase_durations\":[10,11],\"total\":21}\n");

    let short = amnet(&["duration", "--frontend-json", path(&fe), "--durations", "2,3"]);
    assert_eq!(short.code, 4);
    assert_eq!(short.error()["error"], "domain");
    let fractional = amnet(&["duration", "--frontend-json", path(&fe), "--durations", "1.5,1,1,1,1,1"]);
    assert_eq!(fractional.code, 4);
}

#[test]
fn encode_summarizes_every_module() {
    let fe = fixtures().join("frontend.json");
    let run = amnet(&["encode", "--frontend-json", path(&fe), "--blocks", "2", "--seed", "3"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = run.json();
    assert_eq!(v["rows"], 6);
    assert_eq!(v["cols"], 256);
    assert_eq!(v["row0"].as_array().unwrap().len(), 256);
    let names: Vec<&str> = v["modules"].as_array().unwrap().iter().map(|m| m["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["input", "block0.attention", "block0.ffn", "block1.attention", "block1.ffn"]);
    // Every module ends in a layer norm, so each row sums to zero.
    for m in v["modules"].as_array().unwrap() {
        assert!(m["checksum"].as_f64().unwrap().abs() < 1e-9);
    }

    let again = amnet(&["encode", "--frontend-json", path(&fe), "--blocks", "2", "--seed", "3"]);
    assert_eq!(again.stdout, run.stdout);
    let other = amnet(&["encode", "--frontend-json", path(&fe), "--blocks", "2", "--seed", "4"]);
    assert_ne!(other.json()["row0"], v["row0"]);
}

#[test]
fn encode_rejects_inconsistent_frontend_json() {
    let dir = scratch("encode");
    let bad = dir.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"phonemes":["n","i"],"tones":[0],"labels_per_phoneme":["S","S"],"numeric_per_phoneme":[1,1],"phrase_spans":[[0,2]]}"#,
    )
    .unwrap();
    let run = amnet(&["encode", "--frontend-json", path(&bad)]);
    assert_eq!(run.code, 4);
    let unknown = dir.join("unknown.json");
    std::fs::write(
        &unknown,
        r#"{"phonemes":["qq"],"tones":[1],"labels_per_phoneme":["S"],"numeric_per_phoneme":[1],"phrase_spans":[[0,1]]}"#,
    )
    .unwrap();
    assert_eq!(amnet(&["encode", "--frontend-json", path(&unknown)]).code, 4);
    std::fs::write(&unknown, "not json").unwrap();
    assert_eq!(amnet(&["encode", "--frontend-json", path(&unknown)]).code, 4);
}

#[test]
fn eval_reports_on_generated_recordings() {
    let dir = scratch("eval");
    let reference = sine_wav(&dir, "ref.wav", |t| 150.0 + 150.0 * t, 0.0);
    let noisy = sine_wav(&dir, "hyp.wav", |t| 150.0 + 150.0 * t, 0.02);

    let same = amnet(&["eval", "mcd", path(&reference), path(&reference)]);
    assert_eq!(same.code, 0, "{}", same.stderr);
    let v = same.json();
    assert_eq!(v["mcd_db"], 0.0);
    assert_eq!(v["r2_f0"], 1.0);
    assert_eq!(v["config"], serde_json::json!({"hop": 276, "win": 1102, "n_mels": 80, "n_cepstra": 13}));

    let csv = dir.join("f0.csv");
    let run = amnet(&["eval", "f0", path(&reference), path(&noisy), "--csv", path(&csv)]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = run.json();
    assert!(v["mcd_db"].as_f64().unwrap() > 0.0);
    assert!(v["r2_f0"].as_f64().unwrap() > 0.9);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("time_s,f0_ref_hz,f0_hyp_hz\n"));
    assert_eq!(table.lines().count(), 1 + v["frames_compared"].as_u64().unwrap() as usize);
}

#[test]
fn eval_input_failures() {
    let dir = scratch("eval-errors");
    let garbage = dir.join("garbage.wav");
    std::fs::write(&garbage, b"definitely not audio").unwrap();
    let run = amnet(&["eval", "mcd", path(&garbage), path(&garbage)]);
    assert_eq!(run.code, 4);
    assert_eq!(run.error()["error"], "domain");
    let missing = dir.join("missing.wav");
    let run = amnet(&["eval", "f0", path(&missing), path(&garbage)]);
    assert_eq!(run.code, 3);
    assert_eq!(run.error()["error"], "io");
}

#[test]
fn exit_codes_and_error_lines() {
    let model = fixtures().join("model.json");

    let run = amnet(&[]);
    assert_eq!(run.code, 2);
    assert_eq!(run.error()["error"], "usage");
    assert_eq!(amnet(&["transmogrify"]).code, 2);
    assert_eq!(amnet(&["segment", "--model", path(&model)]).code, 2);

    let run = amnet(&["segment", "--model", "/nonexistent/model.json", "--text", "你好"]);
    assert_eq!(run.code, 3);
    assert!(run.stdout.is_empty());

    let run = amnet(&["segment", "--model", path(&model), "--text", "，。!"]);
    assert_eq!(run.code, 4);
    let err = run.error();
    assert_eq!(err["error"], "domain");
    assert!(err["message"].as_str().unwrap().contains("no characters"));

    let run = amnet(&["frontend", "--model", path(&model), "--line", "1|你好|ni3"]);
    assert_eq!(run.code, 4);

    let help = amnet(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("selftest"));
    assert!(help.stderr.is_empty());
}
