use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_batchelor-lab"));
    c.env_remove("BLAB_OUT").env_remove("BLAB_THREADS");
    c
}

fn run(exp: &str, cfg: &Path, out: &Path) -> Output {
    bin().args([exp, "--config"]).arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn geometry_outputs_and_determinism() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "g.cfg", "alpha = 8\nn = 1\n");
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert!(run("geometry", &cfg, &a).status.success());
    assert!(bin().args(["geometry", "--config"]).arg(&cfg).arg("--out").arg(&b).arg("--threads").arg("1").status().unwrap().success());
    assert_eq!(csv_files(&a), csv_files(&b));
    let seg = fs::read_to_string(a.join("singularity_alpha8.csv")).unwrap();
    assert_eq!(seg.lines().count(), 7);
    assert!(seg.starts_with("anchor_x,anchor_y,dir_x,dir_y,length,word,jacobian,class,quality\n"));
    let pts = fs::read_to_string(a.join("multi_intersections_alpha8.csv")).unwrap();
    assert_eq!(pts.lines().count(), 5);
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = ok"));
    assert!(manifest.contains("config.alpha = 8"));
    assert!(manifest.contains("wall_seconds.total"));
}

#[test]
fn validation_error_exit_2_names_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "b.cfg", "cutoffs =\n");
    let o = run("batchelor", &cfg, &d.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cutoffs"));
    assert!(!d.path().join("o").join("manifest.txt").exists());
    let o = run("nonsense", &cfg, &d.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn guard_abort_exit_3_recorded() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "g.cfg", "alpha = 16\nn = 3\nguard = 1000\n");
    let out = d.path().join("o");
    let o = run("geometry", &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = guard-abort"));
    assert!(manifest.contains("flag.guard_abort"));
}

#[test]
fn env_out_directory() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "e.cfg", "alpha = 8\nn_max = 2\ngrid = 64\n");
    let out = d.path().join("env_out");
    let st = bin().args(["evolve", "--config"]).arg(&cfg).env("BLAB_OUT", &out).env("BLAB_THREADS", "1").status().unwrap();
    assert!(st.success());
    let t = fs::read_to_string(out.join("evolve_alpha8.csv")).unwrap();
    assert!(t.starts_with("n,l2_mass,h_minus1,h_minus3,alias\n"));
    assert_eq!(t.lines().count(), 4);
}

#[test]
fn render_and_malformed_csv() {
    let d = tempfile::tempdir().unwrap();
    let good = write_cfg(d.path(), "decay.csv", "n,value\n0,1e0\n1,1e-1\n2,1e-2\n");
    let cfg = write_cfg(d.path(), "r.cfg", &format!("input = {}\nkind = semilog-decay\n", good.display()));
    let out = d.path().join("o");
    assert!(run("render", &cfg, &out).status.success());
    let svg = fs::read_to_string(out.join("decay.semilog-decay.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("viewBox=\"0 0 640 480\""));

    let bad = write_cfg(d.path(), "bad.csv", "n,value\n0,1e0\n1\n");
    let cfg = write_cfg(d.path(), "r2.cfg", &format!("input = {}\nkind = semilog-decay\n", bad.display()));
    let o = run("render", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn mixing_schema() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_cfg(d.path(), "m.cfg", "alpha = 4\nn_max = 2\ngrid = 256\nsvg = false\n");
    let out = d.path().join("o");
    assert!(run("mixing", &cfg, &out).status.success());
    let t = fs::read_to_string(out.join("mixing_alpha4.csv")).unwrap();
    assert!(t.starts_with("n,value,alias\n"));
    assert!(!t.contains('\r'));
    assert!(!out.join("mixing_alpha4.svg").exists());
}
