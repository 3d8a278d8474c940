use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::write_atomic;
use crate::domains::rfft;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    /// Samples in the trace.
    pub resolution: usize,
    pub sampling_rate: f64,
    pub frequency: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self { resolution: 1000, sampling_rate: 1000.0, frequency: 10.0 }
    }
}

/// A sinusoidal saliency trace, its rectified variant and both power spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct SignDistortion {
    pub time: Vec<f64>,
    pub signed: Vec<f64>,
    pub absolute: Vec<f64>,
    pub freqs: Vec<f64>,
    pub power_signed: Vec<f64>,
    pub power_absolute: Vec<f64>,
    pub peak_signed: f64,
    pub peak_absolute: f64,
}

fn power(x: &[f64]) -> Vec<f64> {
    rfft(x).iter().map(|c| c.norm_sqr()).collect()
}

/// Frequency of the largest bin above DC.
fn dominant(freqs: &[f64], p: &[f64]) -> f64 {
    let k = (1..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a))).unwrap_or(0);
    freqs[k]
}

pub fn sign_distortion(cfg: &DemoConfig) -> Result<SignDistortion> {
    let DemoConfig { resolution: n, sampling_rate: fs, frequency: f } = *cfg;
    if n < 4 || !(fs > 0.0) || !(f > 0.0 && f < fs / 2.0) {
        return Err(Error::Config(format!("demo needs resolution >= 4 and 0 < frequency < fs/2, got n={n} fs={fs} f={f}")));
    }
    let time: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
    let signed: Vec<f64> = time.iter().map(|t| (2.0 * PI * f * t).sin()).collect();
    let absolute: Vec<f64> = signed.iter().map(|v| v.abs()).collect();
    let freqs: Vec<f64> = (0..=n / 2).map(|k| k as f64 * fs / n as f64).collect();
    let (power_signed, power_absolute) = (power(&signed), power(&absolute));
    Ok(SignDistortion {
        peak_signed: dominant(&freqs, &power_signed),
        peak_absolute: dominant(&freqs, &power_absolute),
        time,
        signed,
        absolute,
        freqs,
        power_signed,
        power_absolute,
    })
}

fn polyline(xs: &[f64], ys: &[f64], x0: f64, y0: f64, w: f64, h: f64, color: &str) -> String {
    let (xmax, ymin, ymax) = (
        xs.iter().cloned().fold(f64::MIN, f64::max),
        ys.iter().cloned().fold(f64::MAX, f64::min),
        ys.iter().cloned().fold(f64::MIN, f64::max),
    );
    let (xr, yr) = (xmax.max(1e-300), (ymax - ymin).max(1e-300));
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| format!("{:.2},{:.2}", x0 + w * x / xr, y0 + h - h * (y - ymin) / yr))
        .collect();
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>\n", pts.join(" "))
}

pub fn svg(d: &SignDistortion) -> String {
    let mut s = String::from("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"520\" font-family=\"sans-serif\" font-size=\"12\">\n");
    s += "<rect width=\"800\" height=\"520\" fill=\"white\"/>\n";
    let _ = writeln!(s, "<text x=\"40\" y=\"24\">saliency trace: signed (blue) and absolute (red)</text>");
    s += &polyline(&d.time, &d.signed, 40.0, 40.0, 720.0, 180.0, "#1f77b4");
    s += &polyline(&d.time, &d.absolute, 40.0, 40.0, 720.0, 180.0, "#d62728");
    let _ = writeln!(
        s,
        "<text x=\"40\" y=\"274\">power spectrum: signed peak {} Hz, absolute peak {} Hz (DC omitted)</text>",
        d.peak_signed, d.peak_absolute
    );
    let cut = d.freqs.len().min(((d.peak_absolute * 4.0) / d.freqs[1].max(1e-300)) as usize + 1).max(2);
    s += &polyline(&d.freqs[1..cut], &d.power_signed[1..cut], 40.0, 290.0, 720.0, 200.0, "#1f77b4");
    s += &polyline(&d.freqs[1..cut], &d.power_absolute[1..cut], 40.0, 290.0, 720.0, 200.0, "#d62728");
    s += "</svg>\n";
    s
}

/// `demo-sign-distortion`: writes `trace.csv`, `spectrum.csv` and
/// `sign_distortion.svg` into `out`.
pub fn cmd_demo(cfg: &DemoConfig, out: &Path) -> Result<SignDistortion> {
    let d = sign_distortion(cfg)?;
    let mut trace = String::from("time,signed,absolute\n");
    for i in 0..d.time.len() {
        let _ = writeln!(trace, "{},{},{}", d.time[i], d.signed[i], d.absolute[i]);
    }
    let mut spec = String::from("frequency,power_signed,power_absolute\n");
    for k in 0..d.freqs.len() {
        let _ = writeln!(spec, "{},{},{}", d.freqs[k], d.power_signed[k], d.power_absolute[k]);
    }
    write_atomic(&out.join("trace.csv"), trace.as_bytes())?;
    write_atomic(&out.join("spectrum.csv"), spec.as_bytes())?;
    write_atomic(&out.join("sign_distortion.svg"), svg(&d).as_bytes())?;
    Ok(d)
}
