//! Bidding system: turns the second-level Q-table and advertiser revenue into
//! the executed ad action, and prices ads with a generalized second price.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{AdDecision, AdId, Catalog};
use crate::error::{RamError, Result};

/// Q-values over `(NO_AD ∪ candidate ads) × (no-insert head ∪ k+1 slots)`.
/// Row 0 is always the no-ad row.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub rows: Vec<QRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QRow {
    pub ad: Option<AdId>,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn shape(&self) -> (usize, usize) {
        (
            self.rows.len(),
            self.rows.first().map(|r| r.values.len()).unwrap_or(0),
        )
    }

    /// Cells the bidding system may choose: `(NO_AD, 0)` and every real ad at
    /// heads `1..=k+1`.
    pub fn admissible(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (row, r) in self.rows.iter().enumerate() {
            match r.ad {
                None => out.push(Cell { row, head: 0 }),
                Some(_) => out.extend((1..r.values.len()).map(|head| Cell { row, head })),
            }
        }
        out
    }

    pub fn q(&self, cell: Cell) -> f64 {
        self.rows[cell.row].values[cell.head]
    }

    pub fn decision(&self, cell: Cell) -> AdDecision {
        match self.rows[cell.row].ad {
            None => AdDecision::NoAd,
            Some(ad) => AdDecision::Insert {
                ad,
                head: cell.head,
            },
        }
    }

    /// Row holding `decision`'s ad (row 0 for no ad).
    pub fn row_of(&self, decision: AdDecision) -> Option<usize> {
        self.rows.iter().position(|r| r.ad == decision.ad())
    }

    fn tie_key(&self, cell: Cell) -> (i64, usize) {
        (
            self.rows[cell.row].ad.map(|a| a.0 as i64).unwrap_or(-1),
            cell.head,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub row: usize,
    pub head: usize,
}

/// Immediate revenue per Q-table row; slot-independent, and 0 for the no-ad row.
#[derive(Clone, Debug, PartialEq)]
pub struct RevenueModel {
    per_row: Vec<f64>,
}

impl RevenueModel {
    /// `ad_revenues[i]` belongs to table row `i + 1`.
    pub fn new(ad_revenues: Vec<f64>) -> Result<Self> {
        if ad_revenues.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(RamError::Input(
                "revenues must be finite and non-negative".into(),
            ));
        }
        let mut per_row = Vec::with_capacity(ad_revenues.len() + 1);
        per_row.push(0.0);
        per_row.extend(ad_revenues);
        Ok(RevenueModel { per_row })
    }

    pub fn rev(&self, cell: Cell) -> f64 {
        if cell.row == 0 {
            0.0
        } else {
            self.per_row[cell.row]
        }
    }

    pub fn ad_revenues(&self) -> &[f64] {
        &self.per_row[1..]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BiddingRule {
    /// argmax of `Q + α·rev`.
    RamL { alpha: f64 },
    /// The `n` best cells by Q, then the highest revenue among them.
    RamN { n: usize },
}

impl BiddingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BiddingRule::RamL { alpha } if !(alpha.is_finite() && alpha >= 0.0) => Err(
                RamError::Config(format!("alpha must be finite and >= 0, got {alpha}")),
            ),
            BiddingRule::RamN { n: 0 } => Err(RamError::Config("N must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn select(&self, table: &QTable, rev: &RevenueModel) -> Choice {
        match *self {
            BiddingRule::RamL { alpha } => ram_l_select(table, rev, alpha),
            BiddingRule::RamN { n } => ram_n_select(table, rev, n),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BiddingRule::RamL { alpha } => format!("RAM-l(alpha={alpha})"),
            BiddingRule::RamN { n } => format!("RAM-n(N={n})"),
        }
    }
}

/// Selected cell with its Q-value and immediate revenue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Choice {
    pub cell: Cell,
    pub decision: AdDecision,
    pub q: f64,
    pub revenue: f64,
}

fn choice(table: &QTable, rev: &RevenueModel, cell: Cell) -> Choice {
    Choice {
        cell,
        decision: table.decision(cell),
        q: table.q(cell),
        revenue: rev.rev(cell),
    }
}

/// Higher score wins; equal scores go to the lowest `(ad id, head)`.
fn better(table: &QTable, a: (Cell, f64), b: (Cell, f64)) -> bool {
    match a.1.partial_cmp(&b.1) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => table.tie_key(a.0) < table.tie_key(b.0),
    }
}

pub fn ram_l_select(table: &QTable, rev: &RevenueModel, alpha: f64) -> Choice {
    let mut best: Option<(Cell, f64)> = None;
    for cell in table.admissible() {
        let score = table.q(cell) + alpha * rev.rev(cell);
        if best
            .map(|b| better(table, (cell, score), b))
            .unwrap_or(true)
        {
            best = Some((cell, score));
        }
    }
    choice(table, rev, best.expect("no-ad cell is always admissible").0)
}

pub fn ram_n_select(table: &QTable, rev: &RevenueModel, n: usize) -> Choice {
    let mut cells = table.admissible();
    cells.sort_by(|&a, &b| {
        table
            .q(b)
            .partial_cmp(&table.q(a))
            .unwrap_or(Ordering::Equal)
            .then_with(|| table.tie_key(a).cmp(&table.tie_key(b)))
    });
    let n = n.clamp(1, cells.len());
    let mut best = cells[0];
    for &c in &cells[1..n] {
        let (rc, rb) = (rev.rev(c), rev.rev(best));
        // top-N is already in (Q desc, key asc) order, so the first maximal
        // revenue cell also wins the Q and key tie-breaks
        if rc > rb {
            best = c;
        }
    }
    choice(table, rev, best)
}

/// Generalized second price for a single slot: the winner pays the highest
/// competing bid, or `reserve` when alone.
pub fn gsp_payment(bids: &[f64], winner: usize, reserve: f64) -> Result<f64> {
    if bids.is_empty() {
        return Err(RamError::Usage("gsp payment with no bids".into()));
    }
    if winner >= bids.len() {
        return Err(RamError::Usage(format!(
            "winner index {winner} out of range"
        )));
    }
    let others = bids
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != winner)
        .map(|(_, &b)| b)
        .fold(f64::NEG_INFINITY, f64::max);
    if others > bids[winner] {
        return Err(RamError::Usage(format!(
            "bidder {winner} is not the highest bidder ({} < {others})",
            bids[winner]
        )));
    }
    Ok(others.max(reserve).min(bids[winner]))
}

/// Price for ad `i` if it takes the slot: the highest competing bid it
/// outbids, or `reserve` if it outbids none. Equals [`gsp_payment`] for the
/// top bidder and never exceeds the ad's own bid.
pub fn price_if_selected(bids: &[f64], i: usize, reserve: f64) -> f64 {
    let own = bids[i];
    let below = bids
        .iter()
        .enumerate()
        .filter(|&(j, &b)| j != i && b <= own)
        .map(|(_, &b)| b)
        .fold(f64::NEG_INFINITY, f64::max);
    below.max(reserve).min(own)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevenueConvention {
    /// Payment scaled by the ad's predicted click-through rate.
    ExpectedPerClick,
    RawPayment,
}

/// Immediate revenue of each candidate ad under the chosen convention.
pub fn candidate_revenues(
    catalog: &Catalog,
    ads: &[AdId],
    convention: RevenueConvention,
    reserve: f64,
) -> Result<Vec<f64>> {
    let items = ads
        .iter()
        .map(|&a| catalog.ad(a))
        .collect::<Result<Vec<_>>>()?;
    let bids: Vec<f64> = items.iter().map(|a| a.bid_price).collect();
    Ok(items
        .iter()
        .enumerate()
        .map(|(i, ad)| {
            let price = price_if_selected(&bids, i, reserve);
            match convention {
                RevenueConvention::ExpectedPerClick => price * ad.predicted_ctr,
                RevenueConvention::RawPayment => price,
            }
        })
        .collect())
}

pub fn revenue_model(
    catalog: &Catalog,
    ads: &[AdId],
    convention: RevenueConvention,
    reserve: f64,
) -> Result<RevenueModel> {
    RevenueModel::new(candidate_revenues(catalog, ads, convention, reserve)?)
}

/// How the bidding system values candidate ads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RevenueSettings {
    pub convention: RevenueConvention,
    pub reserve: f64,
}

impl RevenueSettings {
    pub fn model(&self, catalog: &Catalog, ads: &[AdId]) -> Result<RevenueModel> {
        revenue_model(catalog, ads, self.convention, self.reserve)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// adA (id 0) at slot 1: Q 0.8, rev 0.1; adB (id 1) at slot 2: Q 0.5, rev 0.6;
    /// NO_AD: Q 0.7. Every other cell is far below.
    fn example() -> (QTable, RevenueModel) {
        let low = -10.0;
        let mut a = vec![low; 8];
        a[1] = 0.8;
        let mut b = vec![low; 8];
        b[2] = 0.5;
        let mut none = vec![low; 8];
        none[0] = 0.7;
        let t = QTable {
            rows: vec![
                QRow {
                    ad: None,
                    values: none,
                },
                QRow {
                    ad: Some(AdId(0)),
                    values: a,
                },
                QRow {
                    ad: Some(AdId(1)),
                    values: b,
                },
            ],
        };
        (t, RevenueModel::new(vec![0.1, 0.6]).unwrap())
    }

    #[test]
    fn ram_l_examples() {
        let (t, r) = example();
        assert_eq!(
            ram_l_select(&t, &r, 1.0).decision,
            AdDecision::Insert {
                ad: AdId(1),
                head: 2
            }
        );
        assert_eq!(
            ram_l_select(&t, &r, 0.1).decision,
            AdDecision::Insert {
                ad: AdId(0),
                head: 1
            }
        );
        assert_eq!(
            ram_l_select(&t, &r, 0.0).decision,
            AdDecision::Insert {
                ad: AdId(0),
                head: 1
            }
        );
    }

    #[test]
    fn ram_n_examples() {
        let (t, r) = example();
        assert_eq!(
            ram_n_select(&t, &r, 1).decision,
            AdDecision::Insert {
                ad: AdId(0),
                head: 1
            }
        );
        // top-2 by Q = {adA, NO_AD}; adA has the larger revenue
        assert_eq!(
            ram_n_select(&t, &r, 2).decision,
            AdDecision::Insert {
                ad: AdId(0),
                head: 1
            }
        );
        assert_eq!(
            ram_n_select(&t, &r, 100).decision,
            AdDecision::Insert {
                ad: AdId(1),
                head: 2
            }
        );
    }

    #[test]
    fn no_ad_row_never_inserts_and_has_zero_revenue() {
        let (t, r) = example();
        let mut only_none = t.clone();
        only_none.rows.truncate(1);
        let c = ram_l_select(&only_none, &RevenueModel::new(vec![]).unwrap(), 5.0);
        assert_eq!(c.decision, AdDecision::NoAd);
        assert_eq!(c.revenue, 0.0);
        assert_eq!(r.rev(Cell { row: 0, head: 0 }), 0.0);
        assert_eq!(t.admissible().len(), 1 + 2 * 7);
    }

    #[test]
    fn gsp_examples() {
        assert_eq!(gsp_payment(&[0.5, 0.3, 0.2], 0, 0.0).unwrap(), 0.3);
        assert_eq!(gsp_payment(&[0.5], 0, 0.0).unwrap(), 0.0);
        assert_eq!(gsp_payment(&[0.5], 0, 0.1).unwrap(), 0.1);
        assert!(matches!(gsp_payment(&[], 0, 0.0), Err(RamError::Usage(_))));
        assert!(matches!(
            gsp_payment(&[0.1, 0.4], 0, 0.0),
            Err(RamError::Usage(_))
        ));
        assert_eq!(price_if_selected(&[0.5, 0.3, 0.2], 1, 0.0), 0.2);
        assert_eq!(price_if_selected(&[0.5, 0.3, 0.2], 0, 0.0), 0.3);
        assert_eq!(price_if_selected(&[0.5, 0.3, 0.2], 2, 0.0), 0.0);
    }

    #[test]
    fn rule_validation() {
        assert!(BiddingRule::RamL { alpha: -1.0 }.validate().is_err());
        assert!(BiddingRule::RamL { alpha: f64::NAN }.validate().is_err());
        assert!(BiddingRule::RamN { n: 0 }.validate().is_err());
        assert!(BiddingRule::RamN { n: 3 }.validate().is_ok());
    }
}
