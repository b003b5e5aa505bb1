//! Lookup of straight-pair and cross quotes in a pillar file.

use std::collections::BTreeSet;

use anyhow::Result;
use hermicop::smile::{invert_pair, parse_tenor, read_pillar_csv, PillarRecord};
use hermicop::{Error, SmilePillars};

use crate::config::{input_error, MarketSpec};

pub struct Quotes {
    records: Vec<PillarRecord>,
    spec: MarketSpec,
    tenor: String,
}

fn same_tenor(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b) || matches!((parse_tenor(a), parse_tenor(b)), (Ok(x), Ok(y)) if (x - y).abs() < 1e-12)
}

impl Quotes {
    pub fn load(spec: &MarketSpec) -> Result<Self> {
        let records = read_pillar_csv(&spec.pillars)?;
        if records.is_empty() {
            return Err(Error::MissingData(format!("no quotes in {}", spec.pillars.display())).into());
        }
        let tenor = match &spec.tenor {
            Some(t) => t.clone(),
            None => {
                let tenors: BTreeSet<&str> = records.iter().map(|r| r.tenor.as_str()).collect();
                if tenors.len() != 1 {
                    return Err(input_error(format!("several tenors in the pillar file ({tenors:?}); choose one with --tenor")));
                }
                records[0].tenor.clone()
            }
        };
        Ok(Self { records, spec: spec.clone(), tenor })
    }

    pub fn tenor(&self) -> &str {
        &self.tenor
    }

    pub fn cross(&self) -> &str {
        &self.spec.cross
    }

    /// Dates carrying any quote for the tenor, ascending.
    pub fn dates(&self) -> Vec<String> {
        let set: BTreeSet<String> =
            self.records.iter().filter(|r| same_tenor(&r.tenor, &self.tenor)).map(|r| r.date.clone()).collect();
        set.into_iter().collect()
    }

    /// The date to use when none is given: the only one in the file.
    pub fn single_date(&self, given: Option<String>) -> Result<String> {
        if let Some(d) = given {
            return Ok(d);
        }
        let dates = self.dates();
        match dates.as_slice() {
            [d] => Ok(d.clone()),
            _ => Err(input_error(format!("{} dates in the pillar file; choose one with --date", dates.len()))),
        }
    }

    /// Quote of `pair`, inverting the reverse pair if only that is present.
    pub fn pair(&self, date: &str, pair: &str) -> Option<SmilePillars> {
        let find = |name: &str| {
            self.records
                .iter()
                .find(|r| r.date == date && same_tenor(&r.tenor, &self.tenor) && r.pair.eq_ignore_ascii_case(name))
                .map(|r| r.pillars)
        };
        find(pair).or_else(|| {
            let reversed = format!("{}{}", &pair[3..], &pair[..3]);
            find(&reversed).map(|p| invert_pair(&p))
        })
    }

    /// `X/Z` and `Y/Z` quotes for the cross `XY` via `Z`.
    pub fn straights(&self, date: &str) -> Option<(SmilePillars, SmilePillars)> {
        let (x, y, z) = (&self.spec.cross[..3], &self.spec.cross[3..], &self.spec.via);
        Some((self.pair(date, &format!("{x}{z}"))?, self.pair(date, &format!("{y}{z}"))?))
    }

    pub fn require_straights(&self, date: &str) -> Result<(SmilePillars, SmilePillars)> {
        self.straights(date).ok_or_else(|| {
            Error::MissingData(format!("straight-pair quotes for {} via {} on {date}", self.spec.cross, self.spec.via)).into()
        })
    }

    pub fn cross_smile(&self, date: &str) -> Option<SmilePillars> {
        self.pair(date, &self.spec.cross)
    }

    pub fn require_cross(&self, date: &str) -> Result<SmilePillars> {
        self.cross_smile(date)
            .ok_or_else(|| Error::MissingData(format!("{} smile on {date}", self.spec.cross)).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hermicop::smile::write_pillar_csv;

    #[test]
    fn reverse_pairs_are_inverted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let usdjpy = SmilePillars { tenor: 1.0, forward: 112.0, df_dom: 1.0, df_for: 0.99, atm: 0.075, c25: 0.076, p25: 0.083, c10: 0.081, p10: 0.097 };
        let eurusd = SmilePillars::flat(1.0, 1.16, 0.99, 1.005, 0.06);
        let rec = |pair: &str, p| PillarRecord { date: "d".into(), pair: pair.into(), tenor: "12M".into(), pillars: p };
        write_pillar_csv(&path, &[rec("EURUSD", eurusd), rec("USDJPY", usdjpy)]).unwrap();
        let spec = MarketSpec { pillars: path, cross: "EURJPY".into(), via: "USD".into(), tenor: Some("1Y".into()) };
        let q = Quotes::load(&spec).unwrap();
        let (xz, yz) = q.straights("d").unwrap();
        assert_eq!(xz, eurusd);
        assert_eq!(yz, invert_pair(&usdjpy));
        assert_eq!(q.dates(), vec!["d".to_string()]);
        assert!(q.cross_smile("d").is_none());
        assert!(q.straights("e").is_none());
    }
}
