//! Static SVG log-log plot of sweep rows.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use lsa_gauss::experiments::fit_log_slope;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 64.0;

struct Rows {
    alpha: Vec<f64>,
    distance: Vec<f64>,
    ci: Option<Vec<f64>>,
}

fn read_rows(path: &Path) -> anyhow::Result<Rows> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("empty CSV")?.split(',').map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(ia), Some(id)) = (col("alpha"), col("distance")) else {
        bail!("{}: need `alpha` and `distance` columns", path.display());
    };
    let ic = col("distance_ci");
    let mut rows = Rows { alpha: vec![], distance: vec![], ci: ic.map(|_| vec![]) };
    for (k, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> anyhow::Result<f64> {
            f.get(i)
                .context("short row")?
                .trim()
                .parse::<f64>()
                .with_context(|| format!("{}: row {}", path.display(), k + 2))
        };
        rows.alpha.push(get(ia)?);
        rows.distance.push(get(id)?);
        if let (Some(i), Some(v)) = (ic, rows.ci.as_mut()) {
            v.push(get(i)?);
        }
    }
    if rows.alpha.len() < 2 {
        bail!("{}: need at least two rows", path.display());
    }
    if rows.alpha.iter().chain(&rows.distance).any(|v| !(*v > 0.0)) {
        bail!("{}: alpha and distance must be positive for a log-log plot", path.display());
    }
    Ok(rows)
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
    let lo = lo.log10().floor();
    let hi = hi.log10().ceil();
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

pub fn render(alpha: &[f64], distance: &[f64], ci: Option<&[f64]>) -> String {
    let (slope, _) = fit_log_slope(alpha, distance);
    let n = alpha.len() as f64;
    let lx: f64 = alpha.iter().map(|a| a.ln()).sum::<f64>() / n;
    let ly: f64 = distance.iter().map(|d| d.ln()).sum::<f64>() / n;
    let fit = |a: f64| (ly + slope * (a.ln() - lx)).exp();

    let (x0, x1) = range(alpha.iter().copied());
    let lows = distance.iter().enumerate().map(|(i, d)| ci.map_or(*d, |c| (d - c[i]).max(d / 10.0)));
    let highs = distance.iter().enumerate().map(|(i, d)| ci.map_or(*d, |c| d + c[i]));
    let (y0, y1) = range(lows.chain(highs).chain(alpha.iter().map(|a| fit(*a))));
    let px = |a: f64| MARGIN + (a.log10() - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |d: f64| H - MARGIN - (d.log10() - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for e in (x0 as i32)..=(x1 as i32) {
        let x = px(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, MARGIN, H - MARGIN);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#, H - MARGIN + 18.0);
    }
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, W - MARGIN);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#, MARGIN - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">alpha</text>"#, W / 2.0, H - 20.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">distance</text>"#,
        H / 2.0,
        H / 2.0
    );

    let amin = alpha.iter().copied().fold(f64::MAX, f64::min);
    let amax = alpha.iter().copied().fold(f64::MIN, f64::max);
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c33" stroke-width="1.5"/>"##,
        px(amin),
        py(fit(amin)),
        px(amax),
        py(fit(amax))
    );
    for (i, (&a, &d)) in alpha.iter().zip(distance).enumerate() {
        if let Some(c) = ci {
            let lo = (d - c[i]).max(d / 10.0);
            let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/>"#, px(a), py(lo), py(d + c[i]));
        }
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#236"/>"##, px(a), py(d));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">fitted slope {slope:.3}</text>"#, MARGIN + 10.0, MARGIN + 18.0);
    s.push_str("</svg>\n");
    s
}

pub fn plot(input: &Path, out: &Path) -> anyhow::Result<u8> {
    let rows = read_rows(input)?;
    let svg = render(&rows.alpha, &rows.distance, rows.ci.as_deref());
    std::fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_label_and_points() {
        let a = [0.1, 0.05, 0.025, 0.0125];
        let d: Vec<f64> = a.iter().map(|x: &f64| x.sqrt()).collect();
        let svg = render(&a, &d, None);
        assert!(svg.contains("fitted slope 0.500"));
        assert_eq!(svg.matches("<circle").count(), 4);
        assert!(svg.starts_with("<svg"));
    }
}
