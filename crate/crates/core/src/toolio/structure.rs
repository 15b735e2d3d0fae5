//! Per-residue confidence from predicted-structure PDB files.
//!
//! Structure predictors store pLDDT in the temperature-factor field
//! (columns 61-66). One value is taken per alpha-carbon `ATOM` row of the
//! first model; alternate locations other than blank or `A` are skipped.

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{numbered_lines, read_all, ToolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlddtScale {
    /// Values are on 0-100. A file whose values all lie in [0, 1] is
    /// rejected, since it almost certainly uses the fractional scale.
    #[default]
    Percent,
    /// Values are on 0-1 and get multiplied by 100.
    Rescale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureConfidence {
    pub id: String,
    pub plddt: Vec<f64>,
    pub mean_plddt: f64,
}

const BFACTOR: std::ops::Range<usize> = 60..66;

pub fn parse_structure_plddt<R: Read>(
    input: R,
    id: impl Into<String>,
    scale: PlddtScale,
) -> Result<StructureConfidence, ToolError> {
    let data = read_all(input)?;
    let mut values = Vec::new();
    let mut first_line = 0;
    for (line, row) in numbered_lines(&data) {
        if row.starts_with(b"ENDMDL") || row.starts_with(b"END ") || row == b"END" {
            break;
        }
        if !row.starts_with(b"ATOM  ") {
            continue;
        }
        if row.len() < BFACTOR.end {
            return Err(ToolError::MalformedAtomRow(line));
        }
        if row[12..16].trim_ascii() != b"CA" || !matches!(row[16], b' ' | b'A') {
            continue;
        }
        let field = std::str::from_utf8(&row[BFACTOR]).map_err(|_| ToolError::MalformedAtomRow(line))?;
        let v: f64 = field.trim().parse().map_err(|_| ToolError::MalformedAtomRow(line))?;
        let v = match scale {
            PlddtScale::Percent if (0.0..=100.0).contains(&v) => v,
            PlddtScale::Rescale if (0.0..=1.0).contains(&v) => v * 100.0,
            _ => return Err(ToolError::ConfidenceOutOfRange(line)),
        };
        if values.is_empty() {
            first_line = line;
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(ToolError::NoAtoms);
    }
    if scale == PlddtScale::Percent && values.iter().all(|&v| v <= 1.0) {
        return Err(ToolError::ConfidenceOutOfRange(first_line));
    }
    let mut sum = 0.0;
    for &v in &values {
        sum += v;
    }
    let mean_plddt = sum / values.len() as f64;
    Ok(StructureConfidence {
        id: id.into(),
        plddt: values,
        mean_plddt,
    })
}

#[cfg(test)]
pub(crate) fn atom_row(serial: usize, name: &str, res_seq: usize, bfactor: f64) -> String {
    let name = if name.len() < 4 { format!(" {name:<3}") } else { name.to_string() };
    format!(
        "ATOM  {serial:>5} {name} ALA A{res_seq:>4}    {:>8.3}{:>8.3}{:>8.3}{:>6.2}{bfactor:>6.2}           {}",
        1.0,
        2.0,
        3.0,
        1.0,
        &name[1..2]
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pdb(values: &[f64]) -> String {
        let mut s = String::from("HEADER    TEST\nMODEL        1\n");
        let mut serial = 1;
        for (i, &v) in values.iter().enumerate() {
            for name in ["N", "CA", "C"] {
                s += &atom_row(serial, name, i + 1, v);
                s.push('\n');
                serial += 1;
            }
        }
        s += "ENDMDL\nEND\n";
        s
    }

    #[test]
    fn columns_are_where_the_format_says() {
        let row = atom_row(2, "CA", 1, 70.0);
        assert_eq!(&row[12..16], " CA ");
        assert_eq!(&row[60..66], " 70.00");
        assert_eq!(&row[0..6], "ATOM  ");
    }

    #[test]
    fn three_residue_mean() {
        let c = parse_structure_plddt(pdb(&[70.0, 80.0, 90.0]).as_bytes(), "x", PlddtScale::Percent).unwrap();
        assert_eq!(c.plddt, vec![70.0, 80.0, 90.0]);
        assert_eq!(c.mean_plddt, 80.0);
    }

    #[test]
    fn fractional_scale_needs_rescale() {
        let text = pdb(&[0.7, 0.8, 0.9]);
        assert_eq!(
            parse_structure_plddt(text.as_bytes(), "x", PlddtScale::Percent),
            Err(ToolError::ConfidenceOutOfRange(4))
        );
        let c = parse_structure_plddt(text.as_bytes(), "x", PlddtScale::Rescale).unwrap();
        assert!((c.mean_plddt - 80.0).abs() < 1e-9);
        let over = pdb(&[70.0]);
        assert!(matches!(
            parse_structure_plddt(over.as_bytes(), "x", PlddtScale::Rescale),
            Err(ToolError::ConfidenceOutOfRange(_))
        ));
    }

    #[test]
    fn first_model_only_and_altloc() {
        let mut text = pdb(&[50.0]);
        text = text.replace("END\n", "");
        text += "MODEL        2\n";
        text += &atom_row(9, "CA", 1, 10.0);
        text += "\n";
        let c = parse_structure_plddt(text.as_bytes(), "x", PlddtScale::Percent).unwrap();
        assert_eq!(c.plddt, vec![50.0]);

        let mut alt = atom_row(1, "CA", 1, 60.0);
        alt.replace_range(16..17, "B");
        let text = format!("{}\n{alt}\n", atom_row(2, "CA", 1, 40.0));
        let c = parse_structure_plddt(text.as_bytes(), "x", PlddtScale::Percent).unwrap();
        assert_eq!(c.plddt, vec![40.0]);
    }

    #[test]
    fn errors() {
        assert_eq!(
            parse_structure_plddt(&b"HEADER\n"[..], "x", PlddtScale::Percent),
            Err(ToolError::NoAtoms)
        );
        assert_eq!(
            parse_structure_plddt(&b"ATOM      1  CA  ALA A   1\n"[..], "x", PlddtScale::Percent),
            Err(ToolError::MalformedAtomRow(1))
        );
        let mut row = atom_row(1, "CA", 1, 70.0);
        row.replace_range(60..66, "  abc ");
        assert_eq!(
            parse_structure_plddt(row.as_bytes(), "x", PlddtScale::Percent),
            Err(ToolError::MalformedAtomRow(1))
        );
        let row = atom_row(1, "CA", 1, 120.0);
        assert_eq!(
            parse_structure_plddt(row.as_bytes(), "x", PlddtScale::Percent),
            Err(ToolError::ConfidenceOutOfRange(1))
        );
    }

    proptest! {
        #[test]
        fn mean_is_within_extremes(values in prop::collection::vec(1.5f64..100.0, 1..40)) {
            let values: Vec<f64> = values.iter().map(|v| (v * 100.0).round() / 100.0).collect();
            let c = parse_structure_plddt(pdb(&values).as_bytes(), "x", PlddtScale::Percent).unwrap();
            prop_assert_eq!(&c.plddt, &values);
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(c.mean_plddt >= lo && c.mean_plddt <= hi);
        }

        #[test]
        fn total_over_bytes(data in prop::collection::vec(any::<u8>(), 0..400)) {
            let _ = parse_structure_plddt(&data[..], "x", PlddtScale::Percent);
        }
    }
}
