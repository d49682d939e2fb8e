use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Samples on `x_i = origin - r + i h`, `i = 0..=N` with `N h = 2 r`, extended
/// by constants outside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub r: f64,
    pub h: f64,
    pub origin: f64,
    pub values: Vec<f64>,
    pub left_tail: f64,
    pub right_tail: f64,
}

/// N for a window of half-width r and spacing h; r / h must be an integer.
pub fn node_count(r: f64, h: f64) -> Result<usize> {
    if !(r > 0.0 && h > 0.0 && r.is_finite() && h.is_finite()) {
        return Err(Error::Grid(format!("need r > 0 and h > 0, got r={r}, h={h}")));
    }
    let half = r / h;
    let rounded = half.round();
    if (half - rounded).abs() > 1e-9 * half.max(1.0) || rounded < 1.0 {
        return Err(Error::Grid(format!("r / h must be a positive integer, got {half}")));
    }
    Ok(2 * rounded as usize)
}

impl GridFunction {
    pub fn new(r: f64, h: f64, origin: f64, values: Vec<f64>, left_tail: f64, right_tail: f64) -> Result<GridFunction> {
        let n = node_count(r, h)?;
        if values.len() != n + 1 {
            return Err(Error::Grid(format!(
                "expected {} values for r={r}, h={h}, got {}",
                n + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) || !left_tail.is_finite() || !right_tail.is_finite() {
            return Err(Error::Grid("non-finite grid values".into()));
        }
        Ok(GridFunction {
            r,
            h,
            origin,
            values,
            left_tail,
            right_tail,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(
        r: f64,
        h: f64,
        origin: f64,
        f: F,
        left_tail: f64,
        right_tail: f64,
    ) -> Result<GridFunction> {
        let n = node_count(r, h)?;
        let values = (0..=n).map(|i| f(origin - r + i as f64 * h)).collect();
        GridFunction::new(r, h, origin, values, left_tail, right_tail)
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn node(&self, i: usize) -> f64 {
        self.origin - self.r + i as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n()).map(|i| self.node(i))
    }

    /// Piecewise linear interpolant, extended by the tails.
    pub fn interpolate(&self, x: f64) -> f64 {
        let p = (x - self.node(0)) / self.h;
        let n = self.n();
        if p <= 0.0 {
            return if p == 0.0 { self.values[0] } else { self.left_tail };
        }
        if p >= n as f64 {
            return if p == n as f64 { self.values[n] } else { self.right_tail };
        }
        let i = (p.floor() as usize).min(n - 1);
        let t = p - i as f64;
        (1.0 - t) * self.values[i] + t * self.values[i + 1]
    }

    /// Text form: commented header, then `x,u` rows.
    pub fn to_text(&self, descriptors: &[(&str, String)]) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "# r={} h={} origin={} left_tail={} right_tail={}",
            self.r, self.h, self.origin, self.left_tail, self.right_tail
        );
        for (k, v) in descriptors {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        out.push_str("x,u\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.node(i), v);
        }
        out
    }

    pub fn write(&self, path: &Path, descriptors: &[(&str, String)]) -> Result<()> {
        std::fs::write(path, self.to_text(descriptors))?;
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<GridFunction> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::Io("missing header line".into()))?;
        let field = |name: &str| -> Result<f64> {
            header
                .split_whitespace()
                .find_map(|tok| tok.strip_prefix(name).and_then(|t| t.strip_prefix('=')))
                .ok_or_else(|| Error::Io(format!("header lacks {name}")))?
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("bad {name}: {e}")))
        };
        let (r, h, origin) = (field("r")?, field("h")?, field("origin")?);
        let (lt, rt) = (field("left_tail")?, field("right_tail")?);
        if lines.next().map(str::trim) != Some("x,u") {
            return Err(Error::Io("missing x,u column header".into()));
        }
        let mut values = Vec::new();
        for l in lines {
            if l.trim().is_empty() {
                continue;
            }
            let v = l
                .split(',')
                .nth(1)
                .ok_or_else(|| Error::Io(format!("bad row {l:?}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Io(format!("bad value in {l:?}: {e}")))?;
            values.push(v);
        }
        GridFunction::new(r, h, origin, values, lt, rt)
    }

    pub fn read(path: &Path) -> Result<GridFunction> {
        GridFunction::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_must_divide_half_width() {
        assert!(node_count(1.0, 0.3).is_err());
        assert_eq!(node_count(1.0, 0.25).unwrap(), 8);
        assert_eq!(node_count(200.0, 0.05).unwrap(), 8000);
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let g = GridFunction::from_fn(3.0, 0.125, 0.1, |x: f64| (x / 3.0).tanh(), -1.0, 1.0).unwrap();
        let t = g.to_text(&[("kernel", "fractional_laplacian(s=0.3)".into())]);
        let back = GridFunction::from_text(&t).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_text(&[("kernel", "fractional_laplacian(s=0.3)".into())]), t);
    }

    #[test]
    fn interpolation_is_exact_at_nodes() {
        let g = GridFunction::from_fn(2.0, 0.5, 0.0, |x| x * x, 4.0, 4.0).unwrap();
        for i in 0..=g.n() {
            assert_eq!(g.interpolate(g.node(i)), g.values[i]);
        }
        assert_eq!(g.interpolate(0.25), 0.125);
        assert_eq!(g.interpolate(10.0), 4.0);
    }
}
