//! Acceptance suite. Each criterion runs once, is checked against its
//! tolerance and time budget, and prints a single PASS/FAIL line. The
//! process exits non-zero if any criterion fails.

use std::io::{BufRead, BufReader, Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use aroi_core::dataprep::random_margin_draw;
use aroi_core::phantom::{generate_phantom, NoduleSpec, PhantomSpec};
use aroi_core::rvol::{load_mask, load_volume, save_mask, save_volume};
use aroi_core::segmenter::{spawn_external, GroundTruthOracle, Segmenter};
use aroi_core::{
    consensus_masks, overlap, stage1_walk, update_roi_step, AroiConfig, ConsensusConfig, Mask2D, Mask3D,
    OverlapReport, Patch2D, PatchKind, Roi2D, View, Volume3D, WalkStop,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_aroi");

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, Duration, Check); 9] = [
        ("consensus: 8 three-view vote patterns", Duration::from_secs(1), consensus_patterns),
        ("a-roi step oracle: 1000 random ROI/mask pairs", Duration::from_secs(5), aroi_step_oracle),
        ("a-roi worked example: A_N=700 side 32 rt 0.6", Duration::from_secs(1), worked_example),
        ("sphere phantom end to end", Duration::from_secs(10), sphere_end_to_end),
        ("drift tracking", Duration::from_secs(10), drift_tracking),
        ("metrics identities", Duration::from_secs(1), metrics_identities),
        ("random margins: 10^4 draws", Duration::from_secs(5), random_margins),
        ("rvol round trip: 100 volumes and masks", Duration::from_secs(5), rvol_round_trip),
        ("protocol conformance against `aroi serve`", Duration::from_secs(5), protocol_conformance),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = t.elapsed();
        let res = match res {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match res {
            Ok(detail) => println!("PASS  {name} [{elapsed:.2?} / {budget:?}] {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{elapsed:.2?} / {budget:?}] {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn consensus_patterns() -> Result<String, String> {
    let cfg = ConsensusConfig::new(0.5).map_err(|e| e.to_string())?;
    // voxel i carries vote pattern i
    let view = |bit: usize| -> Mask3D {
        Mask3D::new([1, 1, 8], [1.0; 3], (0..8).map(|p| ((p >> bit) & 1) as u8).collect()).unwrap()
    };
    let (a, c, s) = (view(0), view(1), view(2));
    let fused = consensus_masks(&[&a, &c, &s], &cfg).map_err(|e| e.to_string())?;
    for p in 0..8usize {
        let votes = p.count_ones() as f64;
        let want = votes > 1.5;
        ensure!(fused.get(0, 0, p) == want, "pattern {p:03b}: got {}, want {want}", fused.get(0, 0, p));
    }
    Ok("8/8 patterns match majority".into())
}

/// Margins by scanning every pixel.
fn brute_margins(m: &Mask2D, side: usize) -> Option<[usize; 4]> {
    let (mut c0, mut c1, mut r0, mut r1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..side {
        for c in 0..side {
            if m.get(r, c) {
                c0 = c0.min(c);
                c1 = c1.max(c);
                r0 = r0.min(r);
                r1 = r1.max(r);
            }
        }
    }
    (c0 != usize::MAX).then(|| [c0, side - 1 - c1, r0, side - 1 - r1])
}

fn aroi_step_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA801);
    let mut grew = 0;
    for case in 0..1000 {
        let side = rng.random_range(2..=64usize);
        let (w, h) = (rng.random_range(side..=256usize), rng.random_range(side..=256usize));
        let roi = Roi2D::square(rng.random_range(0..=w - side), rng.random_range(0..=h - side), side, 0);
        let rt = rng.random_range(0.2..0.95);
        // random blob: a filled rectangle, sometimes speckled
        let (bw, bh) = (rng.random_range(1..=side), rng.random_range(1..=side));
        let (bx, by) = (rng.random_range(0..=side - bw), rng.random_range(0..=side - bh));
        let density = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.2..1.0) };
        let mut m = Mask2D::zeros(side, side);
        for r in by..by + bh {
            for c in bx..bx + bw {
                if rng.random_bool(density) {
                    m.set(r, c, true);
                }
            }
        }
        if m.is_empty() {
            m.set(by, bx, true);
        }
        let cfg = AroiConfig::with_rt(rt).map_err(|e| e.to_string())?;
        let step = update_roi_step(&roi, &m, &cfg, (w, h)).map_err(|e| format!("case {case}: {e}"))?;
        let want = brute_margins(&m, side).expect("non-empty");
        let got = [step.margins.dl, step.margins.dr, step.margins.dt, step.margins.db];
        ensure!(got == want, "case {case}: margins {got:?}, brute force {want:?}");
        if step.growth.is_some() {
            grew += 1;
            let ratio = step.nodule_area as f64 / step.pre_clamp.area() as f64;
            ensure!(ratio <= rt, "case {case}: A_N/A_ROI' = {ratio} > rt = {rt}");
        }
    }
    ensure!(grew > 0, "size branch never fired");
    Ok(format!("margins exact on 1000, size branch fired {grew} times"))
}

fn worked_example() -> Result<String, String> {
    // 28 x 25 = 700 px, margins (2, 2) in x and (3, 4) in y
    let mut m = Mask2D::zeros(32, 32);
    for r in 3..28 {
        for c in 2..30 {
            m.set(r, c, true);
        }
    }
    ensure!(m.count() == 700, "A_N = {}", m.count());
    let cfg = AroiConfig::with_rt(0.6).map_err(|e| e.to_string())?;
    let step = update_roi_step(&Roi2D::square(100, 100, 32, 5), &m, &cfg, (512, 512)).map_err(|e| e.to_string())?;
    // 700 / 0.6 - 1024 = 142.67; sqrt / 2 = 5.97
    let d_s = ((700.0f64 / 0.6 - 1024.0).sqrt() / 2.0).ceil() as usize;
    ensure!(d_s == 6, "oracle D_s = {d_s}");
    ensure!(step.growth == Some(6), "D_s = {:?}", step.growth);
    ensure!(step.roi.side() == 44, "side = {}", step.roi.side());
    Ok("D_s = 6, side = 44".into())
}

fn run(args: &[&str]) -> Result<std::process::Output, String> {
    Command::new(BIN).args(args).output().map_err(|e| e.to_string())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gt_z_extent(gt: &Mask3D) -> usize {
    (0..gt.shape()[0]).filter(|&z| gt.slice_count(z) > 0).count()
}

fn sphere_end_to_end() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec_path = dir.path().join("spec.json");
    let spec = PhantomSpec::centered_sphere(64, 8.0, 20.0, 20240);
    std::fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let (v, g) = (dir.path().join("v.rvol.json"), dir.path().join("g.rvol.json"));
    let o = run(&["phantom", "--spec", p(&spec_path), "--out-vol", p(&v), "--out-gt", p(&g)])?;
    ensure!(o.status.success(), "phantom failed: {}", String::from_utf8_lossy(&o.stderr));

    let (out, rep) = (dir.path().join("pred.rvol.json"), dir.path().join("report.json"));
    // seed: 24 px square around the center of slice 32
    let o = run(&[
        "segment", "--volume", p(&v), "--seed-roi", "20,20,24", "--seed-slice", "32", "--backend", "threshold",
        "--ref", p(&g), "--out", p(&out), "--report", p(&rep),
    ])?;
    ensure!(o.status.code() == Some(0), "segment exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();

    let gt = load_mask(&g).map_err(|e| e.to_string())?;
    let pred = load_mask(&out).map_err(|e| e.to_string())?;
    let dsc = overlap(&pred, &gt).map_err(|e| e.to_string())?.dsc;
    ensure!(
        report["final"]["dsc"].as_f64() == Some(dsc),
        "report dsc {} disagrees with recomputed {dsc}",
        report["final"]["dsc"]
    );
    let extent = gt_z_extent(&gt);
    let covered = report["slices_covered"].as_u64().unwrap_or(0) as usize;
    ensure!(dsc >= 0.95, "DSC {dsc:.4} < 0.95");
    ensure!(covered == extent, "slices_covered {covered} != ground-truth extent {extent}");
    Ok(format!("DSC {dsc:.4}, slices {covered}/{extent}"))
}

fn drift_tracking() -> Result<String, String> {
    let spec = PhantomSpec {
        shape_zyx: [40, 64, 64],
        spacing_mm_zyx: [2.5, 0.7, 0.7],
        background_hu: -800.0,
        noise_sigma_hu: 0.0,
        nodules: vec![NoduleSpec {
            center_zyx: [19.5, 32.0, 32.0],
            semi_axes_zyx: [6.0, 8.0, 8.0],
            intensity_hu: 800.0,
            drift_yx_per_slice: [0.0, 2.0],
        }],
        rng_seed: 0,
    };
    let (vol, gt) = generate_phantom(&spec).map_err(|e| e.to_string())?;
    let slices: Vec<usize> = (0..40).filter(|&z| gt.slice_count(z) > 0).collect();
    ensure!(slices.len() == 12, "phantom spans {} slices", slices.len());
    let (first, last) = (slices[0], slices[11]);
    // centered on slice 19, whose nodule center is x = 31
    let seed = Roi2D::square(19, 20, 24, 19);
    let cfg = AroiConfig::with_rt(0.6).map_err(|e| e.to_string())?;
    let mut oracle = GroundTruthOracle::new(gt.clone());
    let r = stage1_walk(&vol, &seed, &mut oracle, &cfg).map_err(|e| e.to_string())?;
    let got: Vec<usize> = r.rois.keys().copied().collect();
    ensure!(got == slices, "ROIs on {got:?}, ground truth on {slices:?}");
    ensure!(r.stop_up == WalkStop::EmptySlice(last + 1), "upward stop {:?}", r.stop_up);
    ensure!(r.stop_down == WalkStop::EmptySlice(first - 1), "downward stop {:?}", r.stop_down);
    ensure!(r.mask == gt, "stage-1 mask lost part of the nodule");
    Ok(format!("ROIs on slices {first}..={last}, stops at {} and {}", first - 1, last + 1))
}

fn random_mask(rng: &mut ChaCha8Rng, shape: [usize; 3], density: f64) -> Mask3D {
    let n = shape.iter().product::<usize>();
    Mask3D::new(shape, [1.0; 3], (0..n).map(|_| rng.random_bool(density) as u8).collect()).unwrap()
}

fn metrics_identities() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E7);
    let mut checked = 0;
    for case in 0..500 {
        let shape = [rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6)];
        let (da, db) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let (a, b) = (random_mask(&mut rng, shape, da), random_mask(&mut rng, shape, db));
        let ab = overlap(&a, &b).unwrap();
        let ba = overlap(&b, &a).unwrap();
        ensure!(ab.dsc == ba.dsc, "case {case}: dsc not symmetric");
        ensure!(ab.sen == ba.ppv && ab.ppv == ba.sen, "case {case}: sen/ppv not swapped");
        if ab.tp > 0 {
            let hm = 2.0 * ab.sen * ab.ppv / (ab.sen + ab.ppv);
            ensure!((ab.dsc - hm).abs() < 1e-12, "case {case}: dsc {} vs harmonic mean {hm}", ab.dsc);
            checked += 1;
        }
        for v in [ab.dsc, ab.sen, ab.ppv] {
            ensure!((0.0..=1.0).contains(&v), "case {case}: score {v} outside [0,1]");
        }
    }
    // |P| = |R| = 16, overlap 12
    let pred = Mask3D::new([2, 4, 4], [1.0; 3], (0..32).map(|i| (i < 16) as u8).collect()).unwrap();
    let reference = Mask3D::new([2, 4, 4], [1.0; 3], (0..32).map(|i| (4..20).contains(&i) as u8).collect()).unwrap();
    let r = overlap(&pred, &reference).unwrap();
    ensure!(
        r == OverlapReport {
            dsc: 0.75,
            sen: 0.75,
            ppv: 0.75,
            tp: 12,
            pred_count: 16,
            ref_count: 16
        },
        "16/16/12 case gave {r:?}"
    );
    Ok(format!("500 pairs symmetric, harmonic identity on {checked}, 16/16/12 -> 0.75"))
}

fn random_margins() -> Result<String, String> {
    // 10 x 7 nodule box in the middle of a 128 x 128 slice
    let mut slice = Mask2D::zeros(128, 128);
    for r in 60..67 {
        for c in 59..69 {
            slice.set(r, c, true);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xE6);
    let mut seen = [false; 7];
    for i in 0..10_000 {
        let d = random_margin_draw(&slice, 3, 0.6, &mut rng).map_err(|e| e.to_string())?;
        ensure!(d.d_max == 10 && d.max_margin == 6, "draw {i}: D_max {} f {}", d.d_max, d.max_margin);
        for m in [d.margins.dl, d.margins.dr, d.margins.dt, d.margins.db] {
            ensure!(m <= 6, "draw {i}: margin {m} > 6");
            seen[m] = true;
        }
        let roi = d.roi;
        ensure!(roi.x2 - roi.x1 == roi.y2 - roi.y1, "draw {i}: not square {roi:?}");
        ensure!(
            roi.x1 <= 59 && roi.x2 >= 69 && roi.y1 <= 60 && roi.y2 >= 67,
            "draw {i}: {roi:?} misses the nodule box"
        );
        ensure!(roi.x2 <= 128 && roi.y2 <= 128, "draw {i}: {roi:?} leaves the image");
    }
    ensure!(seen.iter().all(|&s| s), "margin values drawn: {seen:?}");
    Ok("all margins in 0..=6, bbox always contained".into())
}

fn rvol_round_trip() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7701);
    for i in 0..100 {
        let shape = [rng.random_range(1..9), rng.random_range(1..17), rng.random_range(1..17)];
        let n = shape.iter().product::<usize>();
        let spacing = [rng.random_range(0.1..5.0), rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)];
        let v = Volume3D::new(shape, spacing, (0..n).map(|_| rng.random::<i16>()).collect()).unwrap();
        let m = Mask3D::new(shape, spacing, (0..n).map(|_| rng.random_bool(0.3) as u8).collect()).unwrap();
        let (vp, mp) = (dir.path().join(format!("v{i}.rvol.json")), dir.path().join(format!("m{i}.rvol.json")));
        save_volume(&v, &vp).map_err(|e| e.to_string())?;
        save_mask(&m, &mp).map_err(|e| e.to_string())?;
        let (v2, m2) = (load_volume(&vp).map_err(|e| e.to_string())?, load_mask(&mp).map_err(|e| e.to_string())?);
        ensure!(v2 == v, "volume {i} differs after round trip");
        ensure!(m2 == m, "mask {i} differs after round trip");
        ensure!(
            v2.spacing().iter().zip(v.spacing()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "volume {i} spacing not bit-exact"
        );
    }
    Ok("100/100 bit-exact".into())
}

fn f32_payload(n: usize, value: f32) -> Vec<u8> {
    (0..n).flat_map(|_| value.to_le_bytes()).collect()
}

/// Raw byte-level client that counts everything crossing the pipes.
struct Wire {
    to: std::process::ChildStdin,
    from: BufReader<std::process::ChildStdout>,
    sent: usize,
    received: usize,
}

impl Wire {
    fn send(&mut self, bytes: &[u8]) {
        self.to.write_all(bytes).unwrap();
        self.to.flush().unwrap();
        self.sent += bytes.len();
    }

    fn line(&mut self) -> String {
        let mut l = String::new();
        self.from.read_line(&mut l).unwrap();
        self.received += l.len();
        l
    }

    fn payload(&mut self, n: usize) -> Result<Vec<u8>, String> {
        let mut buf = vec![0u8; n];
        self.from.read_exact(&mut buf).map_err(|e| format!("short payload: {e}"))?;
        self.received += n;
        Ok(buf)
    }
}

/// Sends one request frame and returns the status line and the frame size.
fn request(wire: &mut Wire, view: &str, w: usize, h: usize) -> (String, usize) {
    let header = format!("{{\"view\":\"{view}\",\"w\":{w},\"h\":{h}}}\n");
    wire.send(header.as_bytes());
    wire.send(&f32_payload(w * h, 0.25));
    (wire.line(), header.len() + w * h * 4)
}

const OK: &str = "{\"status\":\"ok\"}\n";

const SERVE_ARGS: [&str; 9] = [
    "serve", "--kind", "one", "--axial-size", "16,16", "--coronal-size", "16,8", "--sagittal-size", "8,16",
];

fn protocol_conformance() -> Result<String, String> {
    let mut child = Command::new(BIN)
        .args(SERVE_ARGS)
        .args(["--fail-on-view", "sagittal"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut wire = Wire {
        to: child.stdin.take().unwrap(),
        from: BufReader::new(child.stdout.take().unwrap()),
        sent: 0,
        received: 0,
    };
    let mut expect_sent = 0;
    let mut expect_received = 0;

    let hs_line = wire.line();
    expect_received += hs_line.len();
    ensure!(hs_line.ends_with('\n'), "handshake not newline-terminated");
    let hs: Value = serde_json::from_str(&hs_line).map_err(|e| format!("handshake {hs_line:?}: {e}"))?;
    ensure!(hs["proto"] == "aroi-seg/1", "proto {}", hs["proto"]);
    ensure!(hs["name"].is_string(), "name {}", hs["name"]);
    for (view, size) in [("axial", [16, 16]), ("coronal", [16, 8]), ("sagittal", [8, 16])] {
        ensure!(hs["input_sizes"][view] == serde_json::json!(size), "{view} size {}", hs["input_sizes"]);
    }

    // well-formed requests: status line, then exactly w*h f32 values
    for (view, w, h) in [("axial", 16, 16), ("coronal", 16, 8), ("axial", 16, 16)] {
        let (status, n) = request(&mut wire, view, w, h);
        expect_sent += n;
        ensure!(status == OK, "{view}: status line {status:?}");
        let payload = wire.payload(w * h * 4)?;
        expect_received += OK.len() + w * h * 4;
        let vals: Vec<f32> = payload.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        ensure!(vals.iter().all(|&v| v == 1.0), "{view}: payload starts {:?}", &vals[..4]);
    }

    // backend failure and a wrong-size payload: error line, no payload
    for (view, w, h) in [("sagittal", 8, 16), ("axial", 8, 8)] {
        let (status, n) = request(&mut wire, view, w, h);
        expect_sent += n;
        expect_received += status.len();
        let v: Value = serde_json::from_str(&status).map_err(|e| format!("{status:?}: {e}"))?;
        ensure!(v["status"] == "error" && v["msg"].is_string(), "{view} {w}x{h}: {status:?}");
    }
    // malformed header
    wire.send(b"this is not json\n");
    expect_sent += 17;
    let status = wire.line();
    expect_received += status.len();
    ensure!(status.starts_with("{\"status\":\"error\""), "malformed header answered {status:?}");

    // framing survived the errors
    let (status, n) = request(&mut wire, "coronal", 16, 8);
    expect_sent += n;
    ensure!(status == OK, "after errors: {status:?}");
    wire.payload(16 * 8 * 4)?;
    expect_received += OK.len() + 512;

    wire.send(b"{\"cmd\":\"quit\"}\n");
    expect_sent += 15;
    let mut rest = Vec::new();
    wire.from.read_to_end(&mut rest).map_err(|e| e.to_string())?;
    ensure!(rest.is_empty(), "{} stray bytes after quit", rest.len());
    let status = child.wait().map_err(|e| e.to_string())?;
    ensure!(status.success(), "server exited with {status}");
    ensure!(wire.sent == expect_sent, "sent {} bytes, expected {expect_sent}", wire.sent);
    ensure!(wire.received == expect_received, "received {} bytes, expected {expect_received}", wire.received);

    // the engine's own client against the same server
    let mut argv: Vec<String> = std::iter::once(BIN).chain(SERVE_ARGS).map(String::from).collect();
    argv.extend(["--fail-on-view".into(), "sagittal".into()]);
    let mut client = spawn_external(&argv, Duration::from_secs(5)).map_err(|e| e.to_string())?.strict(true);
    for (view, (w, h)) in [(View::Axial, (16, 16)), (View::Coronal, (16, 8))] {
        let patch = Patch2D::new(w, h, vec![0.5; w * h], PatchKind::Probability).unwrap();
        let out = client.segment_patch(view, &patch).map_err(|e| format!("{view}: {e}"))?;
        ensure!(out.dims() == (w, h) && out.pixels().iter().all(|&v| v == 1.0), "{view}: bad output");
    }
    let sag = Patch2D::new(8, 16, vec![0.5; 128], PatchKind::Probability).unwrap();
    ensure!(client.segment_patch(View::Sagittal, &sag).is_err(), "sagittal error response not surfaced");
    let st = client.stats();
    ensure!(st.requests == 3 && st.error_responses == 1, "client stats {st:?}");
    ensure!(st.payload_bytes_sent == (256 + 128 + 128) * 4, "client sent {} payload bytes", st.payload_bytes_sent);
    ensure!(st.payload_bytes_received == (256 + 128) * 4, "client received {} payload bytes", st.payload_bytes_received);
    let exit = client.shutdown().map_err(|e| e.to_string())?;
    ensure!(exit.is_some_and(|s| s.success()), "server exit after quit: {exit:?}");

    Ok(format!("{} bytes out, {} bytes in, 3 error responses, clean quit", wire.sent, wire.received))
}
