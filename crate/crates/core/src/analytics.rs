//! Reductions over simulation batches: league projections, per-game
//! statistics and points distributions.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LemError, Result};
use crate::sim::SimulationResult;
use crate::vocab::Vocabulary;

pub const HOME_FIXTURES: u32 = 19;
pub const TOP_K: usize = 6;

/// Actual end-of-season positions of one team.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub team: String,
    pub full_rank: u32,
    pub home_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub team: String,
    /// Expected points per home match.
    pub exp_points: f64,
    pub season_points: f64,
    pub exp_rank: u32,
    pub ref_rank: u32,
    pub ref_home_rank: u32,
    pub displacement: u32,
    pub home_displacement: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueProjection {
    /// Sorted by expected rank.
    pub rows: Vec<ProjectionRow>,
    pub avg_displacement: f64,
    pub avg_home_displacement: f64,
    pub top_k: usize,
    pub top_k_displacement: f64,
    pub top_k_home_displacement: f64,
}

/// Ranks teams by expected points per home match (descending, ties by team
/// label) and measures displacement against the reference tables.
pub fn project_league(
    expected: &[(String, f64)],
    reference: &[ReferenceRow],
    home_fixtures: u32,
    top_k: usize,
) -> Result<LeagueProjection> {
    if expected.is_empty() {
        return Err(LemError::InvalidInput("no teams to project".into()));
    }
    let mut refs: HashMap<&str, &ReferenceRow> = HashMap::new();
    for r in reference {
        if refs.insert(r.team.as_str(), r).is_some() {
            return Err(LemError::TeamMismatch(format!("team {} listed twice in reference", r.team)));
        }
    }
    let mut seen = HashSet::new();
    for (team, pts) in expected {
        if !seen.insert(team.as_str()) {
            return Err(LemError::TeamMismatch(format!("team {team} has two batches")));
        }
        if !refs.contains_key(team.as_str()) {
            return Err(LemError::TeamMismatch(format!("team {team} missing from reference")));
        }
        if !(0.0..=3.0).contains(pts) {
            return Err(LemError::InvalidInput(format!("team {team}: expected points {pts}")));
        }
    }
    if let Some(extra) = reference.iter().find(|r| !seen.contains(r.team.as_str())) {
        return Err(LemError::TeamMismatch(format!("reference team {} has no batch", extra.team)));
    }

    let mut order: Vec<&(String, f64)> = expected.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let rows: Vec<ProjectionRow> = order
        .iter()
        .enumerate()
        .map(|(i, (team, pts))| {
            let r = refs[team.as_str()];
            let exp_rank = i as u32 + 1;
            ProjectionRow {
                team: team.clone(),
                exp_points: *pts,
                season_points: home_fixtures as f64 * pts,
                exp_rank,
                ref_rank: r.full_rank,
                ref_home_rank: r.home_rank,
                displacement: exp_rank.abs_diff(r.full_rank),
                home_displacement: exp_rank.abs_diff(r.home_rank),
            }
        })
        .collect();
    let mean = |rows: &[ProjectionRow], f: fn(&ProjectionRow) -> u32| {
        rows.iter().map(|r| f(r) as f64).sum::<f64>() / rows.len() as f64
    };
    let k = top_k.clamp(1, rows.len());
    Ok(LeagueProjection {
        avg_displacement: mean(&rows, |r| r.displacement),
        avg_home_displacement: mean(&rows, |r| r.home_displacement),
        top_k: k,
        top_k_displacement: mean(&rows[..k], |r| r.displacement),
        top_k_home_displacement: mean(&rows[..k], |r| r.home_displacement),
        rows,
    })
}

pub fn write_projection_csv<W: Write>(p: &LeagueProjection, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &p.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| LemError::io("<csv>", e))?;
    Ok(())
}

/// Reads `team,full_rank,home_rank` rows.
pub fn read_reference_csv<R: std::io::Read>(input: R) -> Result<Vec<ReferenceRow>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    r.deserialize().map(|row| row.map_err(LemError::from)).collect()
}

/// Per-game averages for one side.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SideStats {
    pub events: f64,
    pub passes: f64,
    pub attacking_duels: f64,
    pub defensive_duels: f64,
    pub aerial_duels: f64,
    pub shots: f64,
    pub goals: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub matches: usize,
    pub home: SideStats,
    pub away: SideStats,
}

/// Per-game means of the headline statistics, split by acting side.
pub fn match_stats(results: &[SimulationResult], vocab: &Vocabulary) -> Result<MatchStats> {
    if results.is_empty() {
        return Err(LemError::InvalidInput("no simulations".into()));
    }
    let groups: Vec<Vec<usize>> = ["pass", "attacking_duel", "defensive_duel", "aerial_duel", "shot"]
        .iter()
        .map(|g| vocab.group_members(g).iter().map(|t| t.index()).collect())
        .collect();
    let n = results.len() as f64;
    let side = |counts: &dyn Fn(&SimulationResult) -> &[u32], goals: fn(&SimulationResult) -> u32| {
        let sum = |idx: &[usize]| -> f64 {
            results
                .iter()
                .map(|r| idx.iter().map(|&i| counts(r)[i] as f64).sum::<f64>())
                .sum::<f64>()
                / n
        };
        SideStats {
            events: results.iter().map(|r| counts(r).iter().map(|&c| c as f64).sum::<f64>()).sum::<f64>() / n,
            passes: sum(&groups[0]),
            attacking_duels: sum(&groups[1]),
            defensive_duels: sum(&groups[2]),
            aerial_duels: sum(&groups[3]),
            shots: sum(&groups[4]),
            goals: results.iter().map(|r| goals(r) as f64).sum::<f64>() / n,
        }
    };
    Ok(MatchStats {
        matches: results.len(),
        home: side(&|r| &r.home_type_counts, |r| r.home_goals),
        away: side(&|r| &r.away_type_counts, |r| r.away_goals),
    })
}

/// One row per team in the layout of the per-game statistics table.
pub fn write_stats_csv<W: Write>(rows: &[(String, MatchStats)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "team",
        "matches",
        "passes_home",
        "passes_away",
        "attacking_duels_home",
        "attacking_duels_away",
        "defensive_duels_home",
        "defensive_duels_away",
        "aerial_duels_home",
        "aerial_duels_away",
        "shots_home",
        "shots_away",
        "goals_home",
        "goals_away",
    ])?;
    for (team, s) in rows {
        let (h, a) = (&s.home, &s.away);
        let mut rec = vec![team.clone(), s.matches.to_string()];
        for (x, y) in [
            (h.passes, a.passes),
            (h.attacking_duels, a.attacking_duels),
            (h.defensive_duels, a.defensive_duels),
            (h.aerial_duels, a.aerial_duels),
            (h.shots, a.shots),
            (h.goals, a.goals),
        ] {
            rec.push(format!("{x:.3}"));
            rec.push(format!("{y:.3}"));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| LemError::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionConfig {
    pub home_fixtures: u32,
    pub bootstrap_samples: usize,
    pub seed: u64,
}

impl Default for DistributionConfig {
    fn default() -> Self {
        DistributionConfig {
            home_fixtures: HOME_FIXTURES,
            bootstrap_samples: 10_000,
            seed: 0,
        }
    }
}

/// Share of matches ending with 0, 1 and 3 points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PointsHistogram {
    pub loss: f64,
    pub draw: f64,
    pub win: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonBootstrap {
    pub mean: f64,
    pub variance: f64,
    /// 5th, 25th, 50th, 75th and 95th percentiles of season home points.
    pub quantiles: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDistribution {
    pub scenario: String,
    pub n: usize,
    pub histogram: PointsHistogram,
    pub mean: f64,
    /// Population variance of per-match points.
    pub variance: f64,
    pub season: SeasonBootstrap,
    pub delta_mean: f64,
    pub delta_variance: f64,
    pub delta_histogram: PointsHistogram,
}

fn histogram(points: &[u8]) -> PointsHistogram {
    let n = points.len() as f64;
    let share = |v: u8| points.iter().filter(|&&p| p == v).count() as f64 / n;
    PointsHistogram {
        loss: share(0),
        draw: share(1),
        win: share(3),
    }
}

fn mean_var(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-scenario distributions of match points with deltas against the
/// baseline (the first entry).
pub fn points_distribution(
    batches: &[(String, Vec<u8>)],
    cfg: &DistributionConfig,
) -> Result<Vec<ScenarioDistribution>> {
    if batches.is_empty() {
        return Err(LemError::InvalidInput("no batches".into()));
    }
    for (name, pts) in batches {
        if pts.is_empty() {
            return Err(LemError::InvalidInput(format!("scenario {name} has no simulations")));
        }
        if let Some(p) = pts.iter().find(|&&p| !matches!(p, 0 | 1 | 3)) {
            return Err(LemError::InvalidInput(format!("scenario {name}: {p} points")));
        }
    }
    let mut out: Vec<ScenarioDistribution> = Vec::with_capacity(batches.len());
    for (k, (name, pts)) in batches.iter().enumerate() {
        let (mean, variance) = mean_var(pts.iter().map(|&p| p as f64));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
        let mut seasons: Vec<f64> = (0..cfg.bootstrap_samples.max(1))
            .map(|_| {
                (0..cfg.home_fixtures)
                    .map(|_| pts[rng.random_range(0..pts.len())] as f64)
                    .sum()
            })
            .collect();
        let (s_mean, s_var) = mean_var(seasons.iter().copied());
        seasons.sort_by(f64::total_cmp);
        let hist = histogram(pts);
        let base = out.first();
        out.push(ScenarioDistribution {
            scenario: name.clone(),
            n: pts.len(),
            histogram: hist,
            mean,
            variance,
            season: SeasonBootstrap {
                mean: s_mean,
                variance: s_var,
                quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| quantile(&seasons, q)),
            },
            delta_mean: base.map_or(0.0, |b| mean - b.mean),
            delta_variance: base.map_or(0.0, |b| variance - b.variance),
            delta_histogram: base.map_or(PointsHistogram::default(), |b| PointsHistogram {
                loss: hist.loss - b.histogram.loss,
                draw: hist.draw - b.histogram.draw,
                win: hist.win - b.histogram.win,
            }),
        });
    }
    Ok(out)
}

/// Long format: scenario, simulation index, points.
pub fn write_distribution_long_csv<W: Write>(batches: &[(String, Vec<u8>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "simulation_index", "points"])?;
    for (name, pts) in batches {
        for (i, p) in pts.iter().enumerate() {
            w.write_record([name.as_str(), &i.to_string(), &p.to_string()])?;
        }
    }
    w.flush().map_err(|e| LemError::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::NUM_TYPES;

    fn reference(ranks: &[(&str, u32, u32)]) -> Vec<ReferenceRow> {
        ranks
            .iter()
            .map(|&(t, f, h)| ReferenceRow {
                team: t.into(),
                full_rank: f,
                home_rank: h,
            })
            .collect()
    }

    #[test]
    fn displacement_by_hand() {
        let exp = vec![("A".to_string(), 2.5), ("B".into(), 2.0), ("C".into(), 1.0)];
        let p = project_league(&exp, &reference(&[("A", 2, 1), ("B", 1, 2), ("C", 3, 3)]), 19, 6).unwrap();
        assert!((p.avg_displacement - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.avg_home_displacement, 0.0);
        assert_eq!(p.top_k, 3);
        assert_eq!(p.rows[0].season_points, 19.0 * 2.5);
    }

    #[test]
    fn ties_break_on_label_and_order_does_not_matter() {
        let a = vec![("B".to_string(), 1.5), ("A".into(), 1.5), ("C".into(), 2.0)];
        let mut b = a.clone();
        b.reverse();
        let r = reference(&[("A", 1, 1), ("B", 2, 2), ("C", 3, 3)]);
        let pa = project_league(&a, &r, 19, 2).unwrap();
        let pb = project_league(&b, &r, 19, 2).unwrap();
        assert_eq!(pa, pb);
        let order: Vec<&str> = pa.rows.iter().map(|r| r.team.as_str()).collect();
        assert_eq!(order, ["C", "A", "B"]);
        assert_eq!(pa.top_k_displacement, (2.0 + 1.0) / 2.0);
    }

    #[test]
    fn team_mismatch_is_an_error() {
        let exp = vec![("A".to_string(), 1.0)];
        assert!(matches!(
            project_league(&exp, &reference(&[("B", 1, 1)]), 19, 6),
            Err(LemError::TeamMismatch(_))
        ));
        assert!(project_league(&exp, &reference(&[("A", 1, 1), ("B", 2, 2)]), 19, 6).is_err());
    }

    fn result(home_counts: &[(usize, u32)], home_goals: u32) -> SimulationResult {
        let mut h = vec![0; NUM_TYPES];
        for &(t, c) in home_counts {
            h[t] = c;
        }
        SimulationResult {
            seed: 0,
            home_goals,
            away_goals: 0,
            num_events: h.iter().sum::<u32>() as usize,
            truncated: false,
            home_type_counts: h,
            away_type_counts: vec![0; NUM_TYPES],
            events: vec![],
        }
    }

    #[test]
    fn stats_average_per_game() {
        let v = Vocabulary::default();
        let shot = v.by_name("Shot").unwrap().index();
        let pass = v.by_name("Simple pass").unwrap().index();
        let s = match_stats(&[result(&[(shot, 3)], 1)], &v).unwrap();
        assert_eq!((s.home.shots, s.home.goals), (3.0, 1.0));
        let s = match_stats(&[result(&[(pass, 400)], 0), result(&[(pass, 500)], 0)], &v).unwrap();
        assert_eq!(s.home.passes, 450.0);
        assert_eq!(s.home.events + s.away.events, 450.0);
    }

    #[test]
    fn distribution_examples() {
        let cfg = DistributionConfig {
            bootstrap_samples: 200,
            ..Default::default()
        };
        let draws = points_distribution(&[("d".into(), vec![1; 30])], &cfg).unwrap();
        assert_eq!(draws[0].histogram.draw, 1.0);
        assert_eq!(draws[0].variance, 0.0);
        assert_eq!(draws[0].season.mean, 19.0);

        let wdl = |w, d, l| {
            let mut v = vec![3u8; w];
            v.extend(vec![1u8; d]);
            v.extend(vec![0u8; l]);
            v
        };
        let out = points_distribution(
            &[("base".into(), wdl(10, 10, 10)), ("scenario".into(), wdl(15, 10, 5))],
            &cfg,
        )
        .unwrap();
        assert!((out[1].delta_mean - 0.5).abs() < 1e-12);
        let same = points_distribution(&[("a".into(), wdl(3, 2, 1)), ("b".into(), wdl(3, 2, 1))], &cfg).unwrap();
        assert_eq!(same[1].delta_mean, 0.0);
        assert_eq!(same[1].delta_variance, 0.0);
        assert_eq!(same[1].delta_histogram, PointsHistogram::default());
    }

    #[test]
    fn reference_csv_parses() {
        let rows = read_reference_csv("team,full_rank,home_rank\nMan City, 1, 1\nBurnley,7,10\n".as_bytes()).unwrap();
        assert_eq!(rows[1], ReferenceRow { team: "Burnley".into(), full_rank: 7, home_rank: 10 });
    }
}
