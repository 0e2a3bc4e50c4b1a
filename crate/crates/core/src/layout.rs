//! Imagery and filter-coefficient arrangement for the engine ring.
//!
//! Imagery sets are packed into groups of `NE` (one slot per engine); filter
//! coefficients are packed into filter groups, each divided into one
//! subgroup per imagery group. A subgroup stores, for every engine, the
//! cyclically ordered sequence of coefficient blocks so that the block at
//! rotation step `t` targets exactly the imagery set resident at that
//! engine at step `t`. Slots left over when counts are not multiples of
//! `NE` stay empty and perform no work.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::{Error, Result};

/// Engines in the loop unless overridden.
pub const DEFAULT_RING_ENGINES: usize = 16;

/// Direction imagery travels each rotation step.
///
/// `Downstream` means engine `e` sends its set to `e + 1` and receives from
/// `e - 1`, so the set stored at slot `s` is resident at engine
/// `(s + t) mod ne` at step `t` — equivalently, engine `e` holds slot
/// `(e - t) mod ne`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    Downstream,
    Upstream,
}

impl Rotation {
    /// Imagery slot resident at `engine` after `step` rotations.
    pub fn resident_slot(self, engine: usize, step: usize, ne: usize) -> usize {
        match self {
            Rotation::Downstream => (engine + ne - step % ne) % ne,
            Rotation::Upstream => (engine + step) % ne,
        }
    }

    /// Step at which the set stored at `slot` reaches `engine`.
    pub fn arrival_step(self, engine: usize, slot: usize, ne: usize) -> usize {
        match self {
            Rotation::Downstream => (engine + ne - slot) % ne,
            Rotation::Upstream => (slot + ne - engine) % ne,
        }
    }
}

/// One filter group: per-engine filter assignment plus one coefficient
/// subgroup per imagery group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterGroup {
    /// `filters[e]` is the output filter whose coefficients live at engine
    /// `e`, if any.
    pub filters: Vec<Option<usize>>,
    /// `subgroups[gi].schedule[e][t]` is the imagery set the block stored at
    /// cyclic position `t` targets.
    pub subgroups: Vec<Subgroup>,
}

/// Cyclic coefficient-block ordering for one (filter group, imagery group)
/// pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgroup {
    pub schedule: Vec<Vec<Option<usize>>>,
}

/// Where one (filter, imagery set) coefficient block lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterSlot {
    pub engine: usize,
    pub group: usize,
    pub subgroup: usize,
    pub position: usize,
}

/// The full arrangement for `nim` imagery sets and `nf` filters on a ring
/// of `ne` engines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutPlan {
    pub ne: usize,
    pub nim: usize,
    pub nf: usize,
    pub rotation: Rotation,
    /// `imagery_groups[g][e]` is the set stored at engine `e` in group `g`.
    pub imagery_groups: Vec<Vec<Option<usize>>>,
    pub filter_groups: Vec<FilterGroup>,
}

/// Builds the default (downstream) plan.
pub fn plan_layout(nim: usize, nf: usize, ne: usize) -> Result<LayoutPlan> {
    plan_layout_with(nim, nf, ne, Rotation::Downstream)
}

/// Builds a plan with an explicit rotation direction.
///
/// Imagery set `i` is stored at engine `i mod ne` of group `i div ne`;
/// filter `f` is assigned to engine `f mod ne` of filter group `f div ne`;
/// the coefficient sequence at each engine is ordered by arrival step of
/// the targeted imagery set.
pub fn plan_layout_with(nim: usize, nf: usize, ne: usize, rotation: Rotation) -> Result<LayoutPlan> {
    if nim == 0 || nf == 0 {
        return Err(Error::Layout("nim and nf must be at least 1".into()));
    }
    if ne < 2 {
        return Err(Error::Layout("a ring needs at least 2 engines".into()));
    }

    let n_ig = nim.div_ceil(ne);
    let n_fg = nf.div_ceil(ne);

    let imagery_groups: Vec<Vec<Option<usize>>> = (0..n_ig)
        .map(|g| {
            (0..ne)
                .map(|e| {
                    let set = g * ne + e;
                    (set < nim).then_some(set)
                })
                .collect()
        })
        .collect();

    let filter_groups: Vec<FilterGroup> = (0..n_fg)
        .map(|gf| {
            let filters: Vec<Option<usize>> = (0..ne)
                .map(|e| {
                    let f = gf * ne + e;
                    (f < nf).then_some(f)
                })
                .collect();
            let subgroups = (0..n_ig)
                .map(|gi| {
                    let schedule = (0..ne)
                        .map(|e| {
                            (0..ne)
                                .map(|t| {
                                    filters[e]?;
                                    let slot = rotation.resident_slot(e, t, ne);
                                    imagery_groups[gi][slot]
                                })
                                .collect()
                        })
                        .collect();
                    Subgroup { schedule }
                })
                .collect();
            FilterGroup { filters, subgroups }
        })
        .collect();

    Ok(LayoutPlan {
        ne,
        nim,
        nf,
        rotation,
        imagery_groups,
        filter_groups,
    })
}

impl LayoutPlan {
    pub fn imagery_group_count(&self) -> usize {
        self.imagery_groups.len()
    }

    pub fn filter_group_count(&self) -> usize {
        self.filter_groups.len()
    }

    /// Locates the coefficient block pairing filter `f` with imagery set
    /// `c`: the engine holding it, its filter group, the subgroup for the
    /// set's imagery group, and the cyclic position (the rotation step at
    /// which the set reaches the engine).
    pub fn filter_slot(&self, f: usize, c: usize) -> Result<FilterSlot> {
        if f >= self.nf || c >= self.nim {
            return Err(Error::Layout(format!(
                "filter {f} / set {c} out of range ({} filters, {} sets)",
                self.nf, self.nim
            )));
        }
        let engine = f % self.ne;
        let slot = c % self.ne;
        Ok(FilterSlot {
            engine,
            group: f / self.ne,
            subgroup: c / self.ne,
            position: self.rotation.arrival_step(engine, slot, self.ne),
        })
    }

    /// Deterministic text table used for golden tests and docs: one line
    /// per engine and pass, listing the scheduled imagery set per step.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let dir = match self.rotation {
            Rotation::Downstream => "downstream",
            Rotation::Upstream => "upstream",
        };
        let _ = writeln!(
            out,
            "plan ne={} nim={} nf={} rotation={}",
            self.ne, self.nim, self.nf, dir
        );
        let _ = writeln!(out, "imagery groups: {}", self.imagery_groups.len());
        for (g, slots) in self.imagery_groups.iter().enumerate() {
            let row: Vec<String> = slots.iter().map(|s| fmt_slot(*s)).collect();
            let _ = writeln!(out, "  group {g}: [{}]", row.join(", "));
        }
        let _ = writeln!(out, "filter groups: {}", self.filter_groups.len());
        for (gf, fg) in self.filter_groups.iter().enumerate() {
            let row: Vec<String> = fg.filters.iter().map(|s| fmt_slot(*s)).collect();
            let _ = writeln!(out, "  group {gf} filters: [{}]", row.join(", "));
            for (gi, sub) in fg.subgroups.iter().enumerate() {
                let _ = writeln!(out, "  group {gf} / subgroup {gi} (engine: set per step):");
                for e in 0..self.ne {
                    let seq: Vec<String> =
                        sub.schedule[e].iter().map(|s| fmt_slot(*s)).collect();
                    let _ = writeln!(
                        out,
                        "    e{e}: f{} <- [{}]",
                        fmt_slot(fg.filters[e]),
                        seq.join(", ")
                    );
                }
            }
        }
        out
    }
}

fn fmt_slot(s: Option<usize>) -> String {
    match s {
        Some(v) => v.to_string(),
        None => "-".to_string(),
    }
}

/// Result of [`coverage_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub violations: Vec<String>,
    /// Fraction of imagery slots occupied across groups.
    pub imagery_utilization: f64,
    /// Fraction of filter slots occupied across groups.
    pub filter_utilization: f64,
    /// Fraction of engine-steps doing real work across the whole schedule.
    pub schedule_utilization: f64,
}

impl CoverageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "coverage: {} violation(s); utilization imagery {:.4} filter {:.4} schedule {:.4}",
            self.violations.len(),
            self.imagery_utilization,
            self.filter_utilization,
            self.schedule_utilization
        );
        for v in &self.violations {
            let _ = writeln!(out, "  violation: {v}");
        }
        out
    }
}

/// Verifies that the schedule pairs every (filter, imagery set) exactly
/// once and that every imagery set is stored exactly once, and reports
/// empty-slot idle fractions.
pub fn coverage_check(plan: &LayoutPlan) -> CoverageReport {
    let mut violations = Vec::new();

    let mut stored: HashMap<usize, usize> = HashMap::new();
    for group in &plan.imagery_groups {
        for set in group.iter().flatten() {
            *stored.entry(*set).or_default() += 1;
        }
    }
    for set in 0..plan.nim {
        match stored.get(&set) {
            Some(1) => {}
            Some(n) => violations.push(format!("imagery set {set} stored {n} times")),
            None => violations.push(format!("imagery set {set} never stored")),
        }
    }
    for (set, n) in stored.iter() {
        if *set >= plan.nim {
            violations.push(format!("unknown imagery set {set} stored {n} time(s)"));
        }
    }

    let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
    let mut active_steps = 0usize;
    let mut total_steps = 0usize;
    for fg in &plan.filter_groups {
        for sub in &fg.subgroups {
            for e in 0..plan.ne {
                for t in 0..plan.ne {
                    total_steps += 1;
                    if let Some(c) = sub.schedule[e][t] {
                        active_steps += 1;
                        match fg.filters[e] {
                            Some(f) => *pairs.entry((f, c)).or_default() += 1,
                            None => violations.push(format!(
                                "engine {e} step {t} schedules set {c} without a filter"
                            )),
                        }
                    }
                }
            }
        }
    }
    for f in 0..plan.nf {
        for c in 0..plan.nim {
            match pairs.get(&(f, c)) {
                Some(1) => {}
                Some(n) => violations.push(format!(
                    "pair (filter {f}, set {c}) scheduled {n} times"
                )),
                None => violations.push(format!("pair (filter {f}, set {c}) never scheduled")),
            }
        }
    }

    let imagery_slots = plan.imagery_groups.len() * plan.ne;
    let filter_slots = plan.filter_groups.len() * plan.ne;
    CoverageReport {
        violations,
        imagery_utilization: plan.nim as f64 / imagery_slots as f64,
        filter_utilization: plan.nf as f64 / filter_slots as f64,
        schedule_utilization: active_steps as f64 / total_steps as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_fit_has_single_groups_and_full_utilization() {
        let plan = plan_layout(16, 16, 16).unwrap();
        assert_eq!(plan.imagery_group_count(), 1);
        assert_eq!(plan.filter_group_count(), 1);
        let report = coverage_check(&plan);
        assert!(report.is_clean(), "{:?}", report.violations);
        assert_eq!(report.imagery_utilization, 1.0);
        assert_eq!(report.filter_utilization, 1.0);
        assert_eq!(report.schedule_utilization, 1.0);
    }

    #[test]
    fn rgb_input_leaves_empty_slots() {
        let plan = plan_layout(3, 16, 16).unwrap();
        assert_eq!(plan.imagery_group_count(), 1);
        let occupied = plan.imagery_groups[0].iter().flatten().count();
        assert_eq!(occupied, 3);
        let report = coverage_check(&plan);
        assert!(report.is_clean());
        assert_eq!(report.imagery_utilization, 3.0 / 16.0);
    }

    #[test]
    fn group_counts_follow_ceil_arithmetic() {
        let plan = plan_layout(32, 64, 16).unwrap();
        assert_eq!(plan.imagery_group_count(), 2);
        assert_eq!(plan.filter_group_count(), 4);
        for fg in &plan.filter_groups {
            assert_eq!(fg.subgroups.len(), 2);
        }
        assert!(coverage_check(&plan).is_clean());
    }

    #[test]
    fn imagery_sets_stored_round_robin() {
        let plan = plan_layout(19, 4, 16).unwrap();
        assert_eq!(plan.imagery_groups[0][5], Some(5));
        assert_eq!(plan.imagery_groups[1][2], Some(18));
        assert_eq!(plan.imagery_groups[1][3], None);
    }

    #[test]
    fn filter_slot_locations() {
        let plan = plan_layout(16, 32, 16).unwrap();
        // self-resident at t=0
        assert_eq!(
            plan.filter_slot(0, 0).unwrap(),
            FilterSlot { engine: 0, group: 0, subgroup: 0, position: 0 }
        );
        // set 1 is stored at engine 1; moving downstream it reaches engine 0
        // only after wrapping the ring
        assert_eq!(
            plan.filter_slot(0, 1).unwrap(),
            FilterSlot { engine: 0, group: 0, subgroup: 0, position: 15 }
        );
        // under the opposite direction it arrives at step 1
        let up = plan_layout_with(16, 32, 16, Rotation::Upstream).unwrap();
        assert_eq!(up.filter_slot(0, 1).unwrap().position, 1);
        // filter 17 lives at engine 1 of filter group 1
        let slot = plan.filter_slot(17, 0).unwrap();
        assert_eq!((slot.engine, slot.group), (1, 1));

        assert!(plan.filter_slot(32, 0).is_err());
        assert!(plan.filter_slot(0, 16).is_err());
    }

    #[test]
    fn schedule_is_coherent_with_residency() {
        for rotation in [Rotation::Downstream, Rotation::Upstream] {
            let plan = plan_layout_with(7, 9, 4, rotation).unwrap();
            for (gf, fg) in plan.filter_groups.iter().enumerate() {
                for (gi, sub) in fg.subgroups.iter().enumerate() {
                    for e in 0..plan.ne {
                        for t in 0..plan.ne {
                            let slot = rotation.resident_slot(e, t, plan.ne);
                            let resident = plan.imagery_groups[gi][slot];
                            match sub.schedule[e][t] {
                                Some(c) => {
                                    assert_eq!(Some(c), resident);
                                    assert!(fg.filters[e].is_some());
                                    let f = fg.filters[e].unwrap();
                                    assert_eq!(f, gf * plan.ne + e);
                                }
                                None => {
                                    assert!(fg.filters[e].is_none() || resident.is_none());
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn corrupted_plan_reports_violation() {
        let mut plan = plan_layout(4, 4, 4).unwrap();
        // store set 1 twice (clobbering set 2's slot)
        plan.imagery_groups[0][2] = Some(1);
        let report = coverage_check(&plan);
        assert!(!report.is_clean());
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("imagery set 1 stored 2 times")));
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("never stored")));
    }

    #[test]
    fn golden_dump_small_plan() {
        let plan = plan_layout(3, 4, 4).unwrap();
        let expected = "\
plan ne=4 nim=3 nf=4 rotation=downstream
imagery groups: 1
  group 0: [0, 1, 2, -]
filter groups: 1
  group 0 filters: [0, 1, 2, 3]
  group 0 / subgroup 0 (engine: set per step):
    e0: f0 <- [0, -, 2, 1]
    e1: f1 <- [1, 0, -, 2]
    e2: f2 <- [2, 1, 0, -]
    e3: f3 <- [-, 2, 1, 0]
";
        assert_eq!(plan.dump(), expected);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(plan_layout(0, 4, 8).is_err());
        assert!(plan_layout(4, 0, 8).is_err());
        assert!(plan_layout(4, 4, 1).is_err());
    }

    proptest! {
        #[test]
        fn completeness_for_arbitrary_sizes(
            nim in 1usize..40,
            nf in 1usize..40,
            ne in 2usize..12,
            upstream in any::<bool>(),
        ) {
            let rotation = if upstream { Rotation::Upstream } else { Rotation::Downstream };
            let plan = plan_layout_with(nim, nf, ne, rotation).unwrap();
            let report = coverage_check(&plan);
            prop_assert!(report.is_clean(), "{:?}", report.violations);
            prop_assert_eq!(plan.imagery_group_count(), nim.div_ceil(ne));
            prop_assert_eq!(plan.filter_group_count(), nf.div_ceil(ne));
        }

        #[test]
        fn filter_slot_agrees_with_schedule(
            nim in 1usize..24,
            nf in 1usize..24,
            ne in 2usize..10,
            upstream in any::<bool>(),
        ) {
            let rotation = if upstream { Rotation::Upstream } else { Rotation::Downstream };
            let plan = plan_layout_with(nim, nf, ne, rotation).unwrap();
            for f in 0..nf {
                for c in 0..nim {
                    let slot = plan.filter_slot(f, c).unwrap();
                    let fg = &plan.filter_groups[slot.group];
                    prop_assert_eq!(fg.filters[slot.engine], Some(f));
                    prop_assert_eq!(
                        fg.subgroups[slot.subgroup].schedule[slot.engine][slot.position],
                        Some(c)
                    );
                }
            }
        }

        #[test]
        fn residency_is_cyclic(e in 0usize..16, ne in 2usize..=16, upstream in any::<bool>()) {
            prop_assume!(e < ne);
            let r = if upstream { Rotation::Upstream } else { Rotation::Downstream };
            prop_assert_eq!(r.resident_slot(e, 0, ne), e);
            prop_assert_eq!(r.resident_slot(e, ne, ne), e);
            for t in 0..ne {
                let slot = r.resident_slot(e, t, ne);
                prop_assert_eq!(r.arrival_step(e, slot, ne), t);
            }
        }
    }
}
