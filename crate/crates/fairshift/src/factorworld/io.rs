//! Dataset CSV persistence.
//!
//! Header `x0..x{d-1},y,a,n0..n{m-1},domain`; features carry 9 significant
//! digits, domain is `S` or `T`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Dataset, Domain, LabeledSample};

pub fn to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..ds.feature_dim {
        write!(out, "x{},", i).unwrap();
    }
    out.push_str("y,a,");
    for i in 0..ds.nuisance_cardinalities.len() {
        write!(out, "n{},", i).unwrap();
    }
    out.push_str("domain\n");
    for smp in &ds.samples {
        for v in &smp.x {
            write!(out, "{:.8e},", v).unwrap();
        }
        write!(out, "{},{},", smp.y, smp.a).unwrap();
        for n in &smp.nuisance {
            write!(out, "{},", n).unwrap();
        }
        out.push(smp.domain.letter());
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(ds))?;
    Ok(())
}

pub fn from_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty dataset csv".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.iter().take_while(|c| c.starts_with('x')).count();
    if d == 0 || cols.get(d) != Some(&"y") || cols.get(d + 1) != Some(&"a") {
        return Err(Error::Parse("dataset header must be x0..,y,a,n0..,domain".into()));
    }
    let m = cols[d + 2..].iter().take_while(|c| c.starts_with('n')).count();
    if cols.len() != d + 3 + m || cols[d + 2 + m] != "domain" {
        return Err(Error::Parse("dataset header must end with nuisance columns and domain".into()));
    }

    let mut samples = Vec::new();
    let mut max_y = 0usize;
    let mut max_a = 0usize;
    let mut max_n = vec![0usize; m];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse(format!("row {}: wrong field count", lineno + 2)));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("row {}: bad float `{}`", lineno + 2, s)))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse(format!("row {}: bad index `{}`", lineno + 2, s)))
        };
        let x: Vec<f64> = fields[..d].iter().map(|s| parse_f(s)).collect::<Result<_>>()?;
        let y = parse_u(fields[d])?;
        let a = parse_u(fields[d + 1])?;
        let nuisance: Vec<usize> =
            fields[d + 2..d + 2 + m].iter().map(|s| parse_u(s)).collect::<Result<_>>()?;
        let domain_field = fields[d + 2 + m];
        let domain = Domain::from_letter(
            domain_field.chars().next().ok_or_else(|| Error::Parse("empty domain field".into()))?,
        )?;
        max_y = max_y.max(y);
        max_a = max_a.max(a);
        for (mx, &n) in max_n.iter_mut().zip(nuisance.iter()) {
            *mx = (*mx).max(n);
        }
        samples.push(LabeledSample { x, y, a, nuisance, domain });
    }
    Ok(Dataset {
        samples,
        feature_dim: d,
        num_labels: (max_y + 1).max(2),
        num_sensitive: (max_a + 1).max(2),
        nuisance_cardinalities: max_n.iter().map(|&n| n + 1).collect(),
    })
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorworld::{build_scenario, sample_dataset, Emitter, ScenarioKind};

    #[test]
    fn header_and_shape_round_trip() {
        let s = build_scenario(ScenarioKind::Sshift1, 8).unwrap();
        let em = Emitter::build(&s.layout, 4, 0.5, 3.0, 7).unwrap();
        let ds = sample_dataset(&s.layout, &s.source, &em, 20, 1, Domain::Source).unwrap();
        let text = to_csv(&ds);
        assert!(text.starts_with("x0,x1,x2,x3,y,a,n0,domain\n"));
        let back = from_csv(&text).unwrap();
        assert_eq!(back.len(), 20);
        assert_eq!(back.feature_dim, 4);
        for (a, b) in back.samples.iter().zip(ds.samples.iter()) {
            assert_eq!(a.y, b.y);
            assert_eq!(a.a, b.a);
            assert_eq!(a.nuisance, b.nuisance);
            assert_eq!(a.domain, b.domain);
            for (u, v) in a.x.iter().zip(b.x.iter()) {
                assert!((u - v).abs() <= 1e-8 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let s = build_scenario(ScenarioKind::Sshift1, 8).unwrap();
        let em = Emitter::build(&s.layout, 4, 0.5, 3.0, 7).unwrap();
        let ds = sample_dataset(&s.layout, &s.source, &em, 20, 1, Domain::Source).unwrap();
        assert_eq!(to_csv(&ds), to_csv(&ds));
    }
}
