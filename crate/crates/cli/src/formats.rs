//! On-disk artifact formats: WIDP1 checkpoints, PGM images, raw CSI
//! records, serialized samples, manifests, and CSV reports. Every format is
//! little-endian and written deterministically so identical runs produce
//! byte-identical files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use widepth_core::csi::RawCsiWindow;
use widepth_core::c64::C64;
use widepth_core::data::{Dataset, Sample};
use widepth_core::metrics::{EvalReport, SampleScores};
use widepth_core::Tensor;

// ---------------------------------------------------------------- WIDP1

const WIDP_MAGIC: &[u8; 4] = b"WIDP";
const WIDP_VERSION: u32 = 1;

/// A checkpoint: named parameter tensors plus free-form metadata lines.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// (key, value) metadata, serialized as `# key value` manifest lines
    pub meta: Vec<(String, String)>,
    pub entries: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn from_params(
        meta: Vec<(String, String)>,
        names: &[String],
        params: &[&Tensor<f32>],
    ) -> Self {
        assert_eq!(names.len(), params.len());
        let entries = names
            .iter()
            .zip(params.iter())
            .map(|(n, p)| (n.clone(), p.shape().to_vec(), p.data().to_vec()))
            .collect();
        Checkpoint { meta, entries }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Copy parameter values into a freshly-built model's parameter slots.
    /// Names and shapes must match exactly, in order.
    pub fn load_into(&self, names: &[String], params: &mut [&mut Tensor<f32>]) -> Result<()> {
        if names.len() != self.entries.len() {
            bail!(
                "checkpoint has {} parameters, model expects {}",
                self.entries.len(),
                names.len()
            );
        }
        for ((entry, name), param) in self.entries.iter().zip(names.iter()).zip(params.iter_mut()) {
            if &entry.0 != name {
                bail!("checkpoint parameter `{}` where `{}` expected", entry.0, name);
            }
            if entry.1 != param.shape() {
                bail!(
                    "checkpoint parameter `{}` has shape {:?}, model expects {:?}",
                    entry.0,
                    entry.1,
                    param.shape()
                );
            }
            param.data_mut().copy_from_slice(&entry.2);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut manifest = String::new();
        for (k, v) in &self.meta {
            manifest.push_str(&format!("# {k} {v}\n"));
        }
        let mut offset = 0usize;
        for (name, shape, data) in &self.entries {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!("{name}\t{}\t{offset}\n", dims.join("x")));
            offset += data.len();
        }
        let mbytes = manifest.as_bytes();
        let mut out = Vec::new();
        out.extend_from_slice(WIDP_MAGIC);
        out.extend_from_slice(&WIDP_VERSION.to_le_bytes());
        out.extend_from_slice(&(mbytes.len() as u64).to_le_bytes());
        out.extend_from_slice(mbytes);
        for (_, _, data) in &self.entries {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..4] != WIDP_MAGIC {
            bail!("not a WIDP checkpoint");
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != WIDP_VERSION {
            bail!("unsupported checkpoint version {version}");
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + mlen {
            bail!("truncated checkpoint manifest");
        }
        let manifest = std::str::from_utf8(&bytes[16..16 + mlen])
            .context("checkpoint manifest is not UTF-8")?;
        let data = &bytes[16 + mlen..];
        if data.len() % 4 != 0 {
            bail!("checkpoint data is not a whole number of floats");
        }
        let floats: Vec<f32> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut meta = Vec::new();
        let mut entries: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        for line in manifest.lines() {
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.push((k.to_string(), v.to_string()));
                continue;
            }
            let mut parts = line.split('\t');
            let (name, dims, off) = (
                parts.next().context("bad manifest line")?,
                parts.next().context("bad manifest line")?,
                parts.next().context("bad manifest line")?,
            );
            let shape: Vec<usize> = dims
                .split('x')
                .map(|d| d.parse().context("bad dimension"))
                .collect::<Result<_>>()?;
            let offset: usize = off.parse().context("bad offset")?;
            let len: usize = shape.iter().product();
            if offset + len > floats.len() {
                bail!("checkpoint entry `{name}` overruns the data block");
            }
            entries.push((name.to_string(), shape, floats[offset..offset + len].to_vec()));
        }
        Ok(Checkpoint { meta, entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes =
            fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_bytes(&bytes)
    }
}

// ---------------------------------------------------------------- PGM

/// 8-bit binary PGM (P5) of a normalized [0,1] image, value x255.
pub fn write_pgm8(path: &Path, width: usize, height: usize, norm: &[f32]) -> Result<()> {
    assert_eq!(norm.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(norm.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// 16-bit binary PGM (P5) of millimeter depth values (big-endian per the
/// PGM specification).
pub fn write_pgm16(path: &Path, width: usize, height: usize, mm: &[u16]) -> Result<()> {
    assert_eq!(mm.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for v in mm {
        out.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let header_end = {
        // P5\nW H\nMAX\n -> find the third newline
        let mut seen = 0;
        let mut idx = 0;
        for (i, &b) in bytes.iter().enumerate() {
            if b == b'\n' {
                seen += 1;
                if seen == 3 {
                    idx = i + 1;
                    break;
                }
            }
        }
        idx
    };
    let header = std::str::from_utf8(&bytes[..header_end]).context("bad PGM header")?;
    let mut lines = header.lines();
    if lines.next() != Some("P5") {
        bail!("not a binary PGM");
    }
    let dims = lines.next().context("missing PGM dimensions")?;
    let (w, h) = dims.split_once(' ').context("bad PGM dimensions")?;
    let (w, h): (usize, usize) = (w.parse()?, h.parse()?);
    let maxval: usize = lines.next().context("missing PGM maxval")?.parse()?;
    if maxval != 65535 {
        bail!("expected 16-bit PGM, maxval {maxval}");
    }
    let data = &bytes[header_end..];
    if data.len() != 2 * w * h {
        bail!("PGM payload size mismatch");
    }
    let vals = data
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes(c.try_into().unwrap()))
        .collect();
    Ok((w, h, vals))
}

// ---------------------------------------------------------------- raw CSI

const CSIR_MAGIC: &[u8; 4] = b"CSIR";

/// Binary record of one raw multi-antenna CSI window: header with dims and
/// rates, then little-endian interleaved re/im 32-bit floats.
pub fn write_csi_record(path: &Path, raw: &RawCsiWindow) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CSIR_MAGIC);
    for d in [raw.n_tx, raw.n_rx, raw.n_sub, raw.n_packet] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&raw.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&raw.carrier_hz.to_le_bytes());
    for z in raw.data() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_csi_record(path: &Path) -> Result<RawCsiWindow> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut head = [0u8; 4 + 16 + 16];
    f.read_exact(&mut head).context("truncated CSI record header")?;
    if &head[0..4] != CSIR_MAGIC {
        bail!("not a CSI record: {}", path.display());
    }
    let dim = |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (n_tx, n_rx, n_sub, n_packet) = (dim(0), dim(1), dim(2), dim(3));
    let sample_rate_hz = f64::from_le_bytes(head[20..28].try_into().unwrap());
    let carrier_hz = f64::from_le_bytes(head[28..36].try_into().unwrap());
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    let n = n_tx * n_rx * n_sub * n_packet;
    if payload.len() != 8 * n {
        bail!("CSI record payload size mismatch");
    }
    let mut raw = RawCsiWindow::zeros(n_tx, n_rx, n_sub, n_packet);
    raw.sample_rate_hz = sample_rate_hz;
    raw.carrier_hz = carrier_hz;
    for (z, c) in raw.data_mut().iter_mut().zip(payload.chunks_exact(8)) {
        let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
        let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
        *z = C64::new(re as f64, im as f64);
    }
    Ok(raw)
}

// ---------------------------------------------------------------- samples

const SAMPLE_MAGIC: &[u8; 4] = b"SMP1";

fn push_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for d in t.shape() {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            bail!("truncated sample file");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let ndim = self.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f32()?);
        }
        Ok(Tensor::from_vec(&shape, data))
    }
}

/// Serialize one preprocessed, aligned sample (both model inputs plus all
/// training targets).
pub fn write_sample(path: &Path, s: &Sample) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(SAMPLE_MAGIC);
    out.extend_from_slice(&(s.id.len() as u32).to_le_bytes());
    out.extend_from_slice(s.id.as_bytes());
    out.extend_from_slice(&s.subject.to_le_bytes());
    out.extend_from_slice(&s.window_start.to_le_bytes());
    push_tensor(&mut out, &s.csi);
    out.extend_from_slice(&(s.phase.len() as u32).to_le_bytes());
    for v in &s.phase {
        out.extend_from_slice(&v.to_le_bytes());
    }
    push_tensor(&mut out, &s.image);
    push_tensor(&mut out, &s.mask);
    out.extend_from_slice(&s.center.0.to_le_bytes());
    out.extend_from_slice(&s.center.1.to_le_bytes());
    out.extend_from_slice(&s.avg_depth.to_le_bytes());
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_sample(path: &Path) -> Result<Sample> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    if r.take(4)? != SAMPLE_MAGIC {
        bail!("not a sample file: {}", path.display());
    }
    let id_len = r.u32()? as usize;
    let id = std::str::from_utf8(r.take(id_len)?)?.to_string();
    let subject = r.u32()?;
    let window_start = r.f64()?;
    let csi = r.tensor()?;
    let phase_len = r.u32()? as usize;
    let mut phase = Vec::with_capacity(phase_len);
    for _ in 0..phase_len {
        phase.push(r.f32()?);
    }
    let image = r.tensor()?;
    let mask = r.tensor()?;
    let center = (r.f32()?, r.f32()?);
    let avg_depth = r.f32()?;
    Ok(Sample {
        id,
        subject,
        window_start,
        csi,
        phase,
        image,
        mask,
        center,
        avg_depth,
    })
}

/// Load every sample listed in a preprocessed-set index file (one sample
/// path per line, relative to the index's directory).
pub fn read_dataset(index: &Path) -> Result<Dataset> {
    let dir = index.parent().unwrap_or(Path::new("."));
    let listing =
        fs::read_to_string(index).with_context(|| format!("reading {}", index.display()))?;
    let mut samples = Vec::new();
    let mut max_subject = 0;
    for line in listing.lines().filter(|l| !l.trim().is_empty()) {
        let s = read_sample(&dir.join(line.trim()))?;
        max_subject = max_subject.max(s.subject);
        samples.push(s);
    }
    if samples.is_empty() {
        bail!("empty dataset index {}", index.display());
    }
    Ok(Dataset {
        samples,
        n_subjects: max_subject as usize + 1,
    })
}

// ---------------------------------------------------------------- manifest

/// One simulated-dataset manifest row.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub subject: u32,
    pub window_start_s: f64,
    pub csi_path: String,
    pub depth_dir: String,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut out = String::from("id, subject, window_start_s, csi_path, depth_dir\n");
    for r in rows {
        out.push_str(&format!(
            "{}, {}, {:.3}, {}, {}\n",
            r.id, r.subject, r.window_start_s, r.csi_path, r.depth_dir
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(|p| p.trim()).collect();
        if parts.len() != 5 {
            bail!("manifest line {} has {} fields, expected 5", i + 1, parts.len());
        }
        rows.push(ManifestRow {
            id: parts[0].to_string(),
            subject: parts[1].parse().context("bad subject id")?,
            window_start_s: parts[2].parse().context("bad window start")?,
            csi_path: parts[3].to_string(),
            depth_dir: parts[4].to_string(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------- CSV

/// Loss-history CSV: `epoch,total,<term columns>`.
pub fn write_history_csv(
    path: &Path,
    term_names: &[&str],
    history: &[(usize, f64, Vec<f64>)],
) -> Result<()> {
    let mut out = String::from("epoch,total");
    for n in term_names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (epoch, total, terms) in history {
        out.push_str(&format!("{epoch},{total:.9}"));
        for t in terms {
            out.push_str(&format!(",{t:.9}"));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Evaluation-report CSV with a final MEAN row.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = String::from("sample_id,mse,soft_iou,depth_err,shape_err,pos_err\n");
    let row = |id: &str, s: &SampleScores| {
        format!(
            "{id},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
            s.mse, s.soft_iou, s.depth_err, s.shape_err, s.pos_err
        )
    };
    for (id, s) in report.sample_ids.iter().zip(report.rows.iter()) {
        out.push_str(&row(id, s));
    }
    out.push_str(&row("MEAN", &report.mean()));
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// SHA-256 of a file, for freeze checks.
pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

/// Write with a trailing newline guard helper for small text artifacts.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
