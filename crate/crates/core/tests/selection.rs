mod common;

use common::{oracles, rng};
use proptest::prelude::*;
use ram_core::auction::{gsp_payment, ram_l_select, ram_n_select, QRow, QTable, RevenueModel};
use ram_core::domain::AdDecision;
use rand::Rng;

#[test]
fn cascade_equals_brute_force_on_consistent_additive_q() {
    oracles::cascade_vs_brute_force(200, 42).unwrap();
}

#[test]
fn auction_laws_on_random_tables() {
    oracles::auction_laws(1000, 17).unwrap();
}

#[test]
fn ad_network_tables_have_no_ad_semantics() {
    oracles::ad_table_semantics(1000, 23).unwrap();
}

#[test]
fn bidding_rule_laws_on_random_tables() {
    let mut r = rng(7);
    for _ in 0..1000 {
        let n_ads = r.random_range(0..=5usize);
        let (t, rev) = oracles::random_table(&mut r, n_ads);
        let cells = t.admissible();
        assert_eq!(cells.len(), 1 + n_ads * 7);
        let q_best = *cells
            .iter()
            .max_by(|a, b| t.q(**a).total_cmp(&t.q(**b)))
            .unwrap();
        assert_eq!(ram_n_select(&t, &rev, 1).cell, q_best);
        assert_eq!(ram_l_select(&t, &rev, 0.0).cell, q_best);

        let all = ram_n_select(&t, &rev, cells.len());
        let max_rev = cells
            .iter()
            .map(|&c| rev.rev(c))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(all.revenue, max_rev);
        if n_ads > 0 {
            assert!(all.decision.is_insert());
            // revenue ties within an ad's row go to its highest-Q slot
            let row = all.cell.row;
            assert!((1..8).all(|h| t.q(all.cell) >= t.rows[row].values[h]));
        }

        let alpha = r.random_range(0.0..3.0);
        let lambda = r.random_range(0.1..10.0);
        let scaled = QTable {
            rows: t
                .rows
                .iter()
                .map(|row| QRow {
                    ad: row.ad,
                    values: row.values.iter().map(|v| v * lambda).collect(),
                })
                .collect(),
        };
        let scaled_rev =
            RevenueModel::new(rev.ad_revenues().iter().map(|v| v * lambda).collect()).unwrap();
        assert_eq!(
            ram_l_select(&t, &rev, alpha).cell,
            ram_l_select(&scaled, &scaled_rev, alpha).cell
        );

        for c in [ram_l_select(&t, &rev, alpha), ram_n_select(&t, &rev, 2)] {
            assert_eq!(c.decision == AdDecision::NoAd, c.cell.head == 0);
            assert_eq!(c.decision == AdDecision::NoAd, c.revenue == 0.0);
        }
    }
}

proptest! {
    #[test]
    fn gsp_never_exceeds_winning_bid(bids in prop::collection::vec(0.0f64..10.0, 1..8), reserve in 0.0f64..3.0) {
        let winner = (0..bids.len()).max_by(|&a, &b| bids[a].total_cmp(&bids[b])).unwrap();
        let p = gsp_payment(&bids, winner, reserve).unwrap();
        prop_assert!(p <= bids[winner]);
        prop_assert!(p >= 0.0);
    }
}
