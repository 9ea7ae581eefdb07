//! Population-average development: sequences rendered from the zero latent
//! or the mean training latent, with their head-circumference curves.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inversion::predict_image;
use crate::metrics::{prediction_mask, BcMethod, RegressionModel};
use crate::network::InrNetwork;
use crate::training::LatentTable;
use crate::volume::VolumeImage;

pub const ZERO_LABEL: &str = "zero-latent";
pub const AVERAGE_LABEL: &str = "average-latent";

/// Arithmetic mean of every table entry (the global latent excluded).
pub fn average_latent(table: &LatentTable) -> Result<Vec<f32>> {
    if table.is_empty() {
        return Err(Error::Empty("latent table"));
    }
    let mut acc = vec![0.0f64; table.dim()];
    for (_, v) in table.entries() {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += *x as f64;
        }
    }
    Ok(acc.into_iter().map(|a| (a / table.len() as f64) as f32).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthCurve {
    pub label: String,
    /// `(pma_weeks, hc_cm)`, ages strictly increasing.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtlasSequence {
    pub images: Vec<VolumeImage>,
    pub curve: GrowthCurve,
}

/// Options shared by every rendered age.
#[derive(Clone, Debug)]
pub struct SequenceOptions<'a> {
    pub shape: &'a [usize],
    pub spacing: &'a [f32],
    pub model: RegressionModel,
    pub bc_method: BcMethod,
    pub threshold: f32,
    pub micro_batch_size: usize,
}

/// Render `latent` at every age in `pmas` (weeks, strictly increasing
/// within [26, 45]) and measure HC on each image.
pub fn generate_sequence(
    net: &InrNetwork,
    latent: &[f32],
    pmas: &[f64],
    label: &str,
    opts: &SequenceOptions,
) -> Result<AtlasSequence> {
    if pmas.is_empty() {
        return Err(Error::Empty("age list"));
    }
    if pmas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidValue("ages must be strictly increasing".into()));
    }
    if let Some(p) = pmas.iter().find(|p| !(26.0..=45.0).contains(*p)) {
        return Err(Error::InvalidValue(format!("age {p} weeks outside [26, 45]")));
    }
    let rendered: Vec<(VolumeImage, f64)> = pmas
        .par_iter()
        .map(|&pma| {
            let img = predict_image(net, latent, pma / 100.0, opts.shape, opts.spacing, opts.micro_batch_size)?;
            let mask = prediction_mask(&img, opts.threshold);
            let bc = if mask.count() > 0 {
                opts.bc_method.measure(&mask, opts.spacing).unwrap_or(0.0)
            } else {
                0.0
            };
            Ok((img, opts.model.predict(bc)))
        })
        .collect::<Result<_>>()?;
    let (images, hcs): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
    Ok(AtlasSequence {
        images,
        curve: GrowthCurve {
            label: label.to_string(),
            points: pmas.iter().copied().zip(hcs).collect(),
        },
    })
}

pub fn write_curves_csv(curves: &[GrowthCurve], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["pma_weeks", "hc_cm", "label"])?;
    for c in curves {
        for (pma, hc) in &c.points {
            w.write_record([pma.to_string(), hc.to_string(), c.label.clone()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Minimal line plot of the curves.
pub fn curves_svg(curves: &[GrowthCurve]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let pts = curves.iter().flat_map(|c| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<polyline points="{m},{m} {m},{} {},{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">PMA (weeks) {x0:.0}–{x1:.0}</text>"#, w / 2.0 - 50.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="5" y="30" font-size="12">HC (cm) {y0:.1}–{y1:.1}</text>"#);
    for (i, c) in curves.iter().enumerate() {
        let color = colors[i % colors.len()];
        let line: Vec<String> = c.points.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            w - m - 120.0,
            m + 15.0 * i as f64,
            c.label
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;
    use crate::training::LatentKeying;

    #[test]
    fn averaging() {
        let mut t = LatentTable::new(3, LatentKeying::PerSubject);
        assert!(average_latent(&t).is_err());
        *t.entry_mut("a") = vec![1.0, -2.0, 0.5];
        assert_eq!(average_latent(&t).unwrap(), vec![1.0, -2.0, 0.5]);
        *t.entry_mut("b") = vec![-1.0, 2.0, -0.5];
        assert_eq!(average_latent(&t).unwrap(), vec![0.0; 3]);
        *t.entry_mut("c") = vec![3.0, 3.0, 3.0];
        t.global_mut()[0] = 100.0;
        assert_eq!(average_latent(&t).unwrap(), vec![1.0; 3]);
    }

    fn opts(shape: &[usize]) -> SequenceOptions<'_> {
        SequenceOptions {
            shape,
            spacing: &[0.3, 0.3],
            model: RegressionModel::REFERENCE,
            bc_method: BcMethod::Hull,
            threshold: 0.05,
            micro_batch_size: 256,
        }
    }

    #[test]
    fn sequences_are_deterministic_and_validated() {
        let net = InrNetwork::init(NetworkConfig::desk_2d(), 3).unwrap();
        let l = vec![0.1f32; 16];
        let shape = [24, 24];
        let a = generate_sequence(&net, &l, &[26.0, 30.0, 45.0], ZERO_LABEL, &opts(&shape)).unwrap();
        let b = generate_sequence(&net, &l, &[26.0, 30.0, 45.0], ZERO_LABEL, &opts(&shape)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.images.len(), 3);
        assert_eq!(a.curve.points.iter().map(|p| p.0).collect::<Vec<_>>(), vec![26.0, 30.0, 45.0]);
        assert!(generate_sequence(&net, &l, &[30.0, 26.0], ZERO_LABEL, &opts(&shape)).is_err());
        assert!(generate_sequence(&net, &l, &[20.0], ZERO_LABEL, &opts(&shape)).is_err());
        assert!(generate_sequence(&net, &l, &[], ZERO_LABEL, &opts(&shape)).is_err());
    }

    #[test]
    fn csv_and_svg() {
        let c = vec![
            GrowthCurve {
                label: ZERO_LABEL.into(),
                points: vec![(26.0, 24.0), (45.0, 35.5)],
            },
            GrowthCurve {
                label: AVERAGE_LABEL.into(),
                points: vec![(26.0, 24.5), (45.0, 35.0)],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        write_curves_csv(&c, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "pma_weeks,hc_cm,label\n26,24,zero-latent\n45,35.5,zero-latent\n26,24.5,average-latent\n45,35,average-latent\n"
        );
        let svg = curves_svg(&c);
        assert!(svg.starts_with("<svg") && svg.contains(AVERAGE_LABEL));
    }
}
