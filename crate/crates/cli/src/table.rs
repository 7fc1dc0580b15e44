use crate::CliError;

/// A CSV result with `#` provenance lines and non-fatal warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub provenance: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub warnings: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Table {
        Table {
            columns: columns.to_vec(),
            ..Table::default()
        }
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.provenance.push(format!("{key}: {value}"));
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header line plus rows.
    pub fn body(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut s = String::new();
        for line in &self.provenance {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s.push_str(&self.body()?);
        Ok(s)
    }

    /// Column index by name.
    pub fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Parsed numeric column.
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.col(name) else { return Vec::new() };
        self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.note("seed", 7);
        t.push(vec!["x,y".into(), "1.5".into()]);
        assert_eq!(t.to_csv().unwrap(), "# seed: 7\na,b\n\"x,y\",1.5\n");
        assert_eq!(t.numbers("b"), vec![1.5]);
        assert!(t.numbers("c").is_empty());
    }
}
